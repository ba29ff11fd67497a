"""Second order two-scale expansion built from ``g``, the correctors and ``u1~``."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from gammahom.cell_problems import CorrectorSet
from gammahom.macro_fields import FineField, MacroFunction, _interp_dirichlet

VARIANTS = ("literal", "proof-step2")


def _dirichlet_grad(values, P, x):
    """Gradient of the multilinear interpolant of nodal ``values`` at ``x``."""
    dim = values.ndim
    s = x * P
    base = np.clip(np.floor(s).astype(np.int64), 0, P - 1)
    t = s - base
    out = np.zeros(x.shape)
    for o in itertools.product((0, 1), repeat=dim):
        v = values[tuple(base[..., k] + o[k] for k in range(dim))]
        for d in range(dim):
            w = np.ones(x.shape[:-1])
            for k in range(dim):
                if k == d:
                    w = w * (1.0 if o[k] else -1.0)
                else:
                    w = w * (t[..., k] if o[k] else 1.0 - t[..., k])
            out[..., d] += w * v
    return out * P


class _MacroField:
    """Value/gradient access to a discrete field on the Dirichlet lattice."""

    def __init__(self, values, P):
        self.values = np.asarray(values, dtype=float)
        self.P = P

    def value(self, x):
        return _interp_dirichlet(self.values, self.P, x)

    def grad(self, x):
        return _dirichlet_grad(self.values, self.P, x)


@dataclass(frozen=True, eq=False)
class TwoScaleExpansion:
    """``u = g + eps u1 + eps^2 u2`` with ``eps = 1/n``.

    ``order=1`` truncates after the ``eps u1`` term.  The ``proof-step2``
    variant drops ``u1~`` from ``u1`` and flips the sign of the
    ``psi_l d_l u1~`` term in ``u2``.
    """

    g: MacroFunction
    correctors: CorrectorSet
    n: int
    u1_tilde: FineField | None = None
    variant: str = "literal"
    order: int = 2

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.g.dim != self.correctors.dim:
            raise ValueError("profile and correctors have different dimensions")
        if self.u1_tilde is not None:
            P = self.u1_tilde.P
            object.__setattr__(self, "_ut", _MacroField(self.u1_tilde.values, P))
            dut = self.u1_tilde.nodal_gradient()
            object.__setattr__(self, "_dut", [_MacroField(dut[..., k], P)
                                              for k in range(self.g.dim)])
        else:
            object.__setattr__(self, "_ut", None)
            object.__setattr__(self, "_dut", None)

    @property
    def eps(self):
        return 1.0 / self.n

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.g.dim:
            raise ValueError(f"points must have trailing dimension {self.g.dim}")
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise ValueError("evaluation points must lie in the closed unit cube")
        return x

    def _terms(self, x, want_grad):
        """Values (and gradients) of u1 and u2 at ``x``."""
        N = self.g.dim
        n = self.n
        cs = self.correctors
        y = n * x
        g1 = self.g.grad(x)
        g2 = self.g.hessian(x)
        psi = [p.interpolate(y) for p in cs.psi]
        chi = [[c.interpolate(y) for c in row] for row in cs.chi]
        lit = self.variant == "literal"

        u1 = sum(psi[j] * g1[..., j] for j in range(N))
        if lit and self._ut is not None:
            u1 = u1 + self._ut.value(x)
        u2 = sum(chi[i][j] * g2[..., i, j] for i in range(N) for j in range(N))
        sign = 1.0 if lit else -1.0
        if self._dut is not None:
            u2 = u2 + sign * sum(psi[j] * self._dut[j].value(x) for j in range(N))
        if not want_grad:
            return u1, u2, None, None

        g3 = self.g.third(x)
        dpsi = [n * p.gradient(y) for p in cs.psi]
        dchi = [[n * c.gradient(y) for c in row] for row in cs.chi]
        du1 = sum(dpsi[j] * g1[..., j, None] + psi[j][..., None] * g2[..., :, j]
                  for j in range(N))
        if lit and self._ut is not None:
            du1 = du1 + self._ut.grad(x)
        du2 = sum(dchi[i][j] * g2[..., i, j, None] + chi[i][j][..., None] * g3[..., :, i, j]
                  for i in range(N) for j in range(N))
        if self._dut is not None:
            du2 = du2 + sign * sum(dpsi[j] * self._dut[j].value(x)[..., None]
                                   + psi[j][..., None] * self._dut[j].grad(x)
                                   for j in range(N))
        return u1, u2, du1, du2

    def evaluate_u1(self, x):
        x = self._check(x)
        return self._terms(x, False)[0]

    def evaluate_u2(self, x):
        x = self._check(x)
        return self._terms(x, False)[1]

    def evaluate(self, x):
        x = self._check(x)
        u1, u2, _, _ = self._terms(x, False)
        out = self.g(x) + self.eps * u1
        if self.order == 2:
            out = out + self.eps**2 * u2
        return out

    def evaluate_expansion_and_gradient(self, x):
        """Value and gradient, with the chain-rule ``1/eps`` on fast-variable derivatives."""
        x = self._check(x)
        u1, u2, du1, du2 = self._terms(x, True)
        val = self.g(x) + self.eps * u1
        grad = self.g.grad(x) + self.eps * du1
        if self.order == 2:
            val = val + self.eps**2 * u2
            grad = grad + self.eps**2 * du2
        return val, grad

    def on_lattice(self, lattice, meta=None) -> FineField:
        """Nodal interpolant on a Dirichlet lattice, boundary values set to zero."""
        info = {"field": "two_scale", "n": self.n, "variant": self.variant,
                "order": self.order, **(meta or {})}
        return FineField.interpolate(lattice, self.evaluate, info)


def evaluate_u1(expansion: TwoScaleExpansion, x):
    return expansion.evaluate_u1(x)


def evaluate_u2(expansion: TwoScaleExpansion, x):
    return expansion.evaluate_u2(x)


def evaluate_expansion_and_gradient(expansion: TwoScaleExpansion, x):
    return expansion.evaluate_expansion_and_gradient(x)
