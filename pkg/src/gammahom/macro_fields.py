"""Macroscopic profiles ``g``, admissible sources ``f`` and the auxiliary field ``u1~``."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from gammahom.fem import Lattice
from gammahom.linalg import DEFAULT_TOL, solve_spd

PI = np.pi


# -- one-dimensional profiles with derivatives up to order three ---------------


def _sine4_1d(t):
    s, c = np.sin(PI * t), np.cos(PI * t)
    return np.stack([
        s**4,
        4.0 * PI * s**3 * c,
        4.0 * PI**2 * s**2 * (3.0 * c**2 - s**2),
        8.0 * PI**3 * s * c * (3.0 * c**2 - 5.0 * s**2),
    ])


_BUMP_CUTOFF = 1e-3


def _bump_1d(t):
    """``e^4 exp(-1/(t(1-t)))`` on (0, 1), zero elsewhere; peak value 1 at t = 1/2."""
    t = np.asarray(t, dtype=float)
    w = t * (1.0 - t)
    inside = w > _BUMP_CUTOFF
    ws = np.where(inside, w, 0.5)
    w1 = 1.0 - 2.0 * t
    w2 = -2.0
    s1 = w1 / ws**2
    s2 = w2 / ws**2 - 2.0 * w1**2 / ws**3
    s3 = -6.0 * w1 * w2 / ws**3 + 6.0 * w1**3 / ws**4
    b = np.exp(4.0 - 1.0 / ws)
    out = np.stack([b, b * s1, b * (s2 + s1**2), b * (s3 + 3.0 * s1 * s2 + s1**3)])
    return np.where(inside, out, 0.0)


PROFILES_1D = {"sine4": _sine4_1d, "bump": _bump_1d}


@dataclass(frozen=True)
class MacroFunction:
    """Tensor-product profile ``g(x) = prod_k G(x_k)`` on ``Omega = (0, 1)^N``.

    ``derivatives(x, order)`` returns arrays of shape ``(...,) + (N,) * order``.
    """

    name: str
    dim: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in PROFILES_1D:
            raise ValueError(f"unknown profile {self.name!r}; valid presets: "
                             f"{', '.join(sorted(PROFILES_1D))}")
        if self.dim not in (1, 2):
            raise ValueError("profiles are implemented for N in (1, 2)")

    def _tables(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"points must have trailing dimension {self.dim}")
        return [PROFILES_1D[self.name](x[..., k]) for k in range(self.dim)]

    def derivatives(self, x, order):
        tables = self._tables(x)
        shape = np.shape(x)[:-1]
        out = np.empty(shape + (self.dim,) * order)
        for idx in itertools.product(range(self.dim), repeat=order):
            counts = [idx.count(k) for k in range(self.dim)]
            val = np.ones(shape)
            for k in range(self.dim):
                val = val * tables[k][counts[k]]
            out[(Ellipsis,) + idx] = val
        return out

    def __call__(self, x):
        return self.derivatives(x, 0)

    def value(self, x):
        return self.derivatives(x, 0)

    def grad(self, x):
        return self.derivatives(x, 1)

    def hessian(self, x):
        return self.derivatives(x, 2)

    def third(self, x):
        return self.derivatives(x, 3)

    def boundary_max(self, samples=65):
        """Largest |derivative| of order <= 3 over sample points on the boundary."""
        t = np.linspace(0.0, 1.0, samples)
        if self.dim == 1:
            pts = np.array([[0.0], [1.0]])
        else:
            edges = [np.stack([t, np.full_like(t, v)], -1) for v in (0.0, 1.0)]
            edges += [np.stack([np.full_like(t, v), t], -1) for v in (0.0, 1.0)]
            pts = np.concatenate(edges)
        return max(float(np.abs(self.derivatives(pts, k)).max()) for k in range(4))


def g_presets():
    """Catalog of available profile ids."""
    return dict(PROFILES_1D)


def make_profile(name, dim, **params):
    if params:
        raise ValueError(f"profile {name!r} takes no parameters, got {sorted(params)}")
    return MacroFunction(name, dim, {})


@dataclass(frozen=True, eq=False)
class Source:
    """``f = -div(A_hom grad g)`` evaluated from the analytic Hessian of ``g``."""

    g: MacroFunction
    A_hom: np.ndarray

    def __call__(self, x):
        return -np.einsum("ij,...ij->...", np.asarray(self.A_hom), self.g.hessian(x))


def source_from_g(g: MacroFunction, A_hom) -> Source:
    A_hom = np.atleast_2d(np.asarray(A_hom, dtype=float))
    if A_hom.shape != (g.dim, g.dim):
        raise ValueError(f"A_hom has shape {A_hom.shape}, expected {(g.dim, g.dim)}")
    if np.abs(A_hom - A_hom.T).max() > 1e-10 * np.abs(A_hom).max() or \
            np.linalg.eigvalsh(0.5 * (A_hom + A_hom.T)).min() <= 0:
        raise ValueError("A_hom must be symmetric positive definite")
    return Source(g, A_hom)


# -- fields on the Dirichlet lattice ---------------------------------------------


@dataclass(frozen=True, eq=False)
class FineField:
    """Nodal Q1 field on the uniform Dirichlet lattice over ``Omega`` with ``P`` cells per axis."""

    dim: int
    P: int
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape((self.P + 1,) * self.dim)
        if np.any(vals[self.lattice.boundary_mask] != 0.0):
            raise ValueError("fine fields must vanish on the boundary")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def lattice(self):
        return Lattice(self.dim, self.P, periodic=False)

    @classmethod
    def from_free(cls, lattice, free_values, meta=None):
        full = np.zeros(lattice.n_nodes)
        full[lattice.free] = free_values
        return cls(lattice.dim, lattice.cells, full.reshape(lattice.node_shape), dict(meta or {}))

    @classmethod
    def interpolate(cls, lattice, func, meta=None):
        """Nodal interpolant of ``func`` with boundary values forced to zero."""
        vals = np.array(func(lattice.node_coords()), dtype=float)
        vals[lattice.boundary_mask] = 0.0
        return cls(lattice.dim, lattice.cells, vals, dict(meta or {}))

    def nodal_gradient(self):
        """Second-order central differences (one-sided at the boundary), ``(..., N)``."""
        h = 1.0 / self.P
        return np.stack(np.gradient(self.values, h, edge_order=2), axis=-1) \
            if self.dim > 1 else np.gradient(self.values, h, edge_order=2)[..., None]

    def sample(self, x):
        """Multilinear interpolation at points ``x`` in the closed unit cube."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise ValueError("evaluation points must lie in the closed unit cube")
        return _interp_dirichlet(self.values, self.P, x)

    def dump(self, path, extra=None):
        """Plain-text dump: ``#`` header lines then row-major node values."""
        meta = {"dim": self.dim, "P": self.P, **self.meta, **(extra or {})}
        with open(path, "w") as fh:
            for k in sorted(meta):
                fh.write(f"# {k} = {meta[k]}\n")
            np.savetxt(fh, self.values.reshape(-1, self.P + 1) if self.dim > 1
                       else self.values[None, :], fmt="%.17g")

    @classmethod
    def load(cls, path):
        meta = {}
        with open(path) as fh:
            for line in fh:
                if not line.startswith("#"):
                    break
                k, v = line[1:].split("=", 1)
                meta[k.strip()] = v.strip()
        vals = np.loadtxt(path, comments="#")
        dim, P = int(meta.pop("dim")), int(meta.pop("P"))
        return cls(dim, P, vals.reshape((P + 1,) * dim), meta)


def _interp_dirichlet(values, P, x):
    dim = values.ndim
    s = x * P
    base = np.clip(np.floor(s).astype(np.int64), 0, P - 1)
    t = s - base
    out = np.zeros(x.shape[:-1])
    for o in itertools.product((0, 1), repeat=dim):
        idx = tuple(base[..., k] + o[k] for k in range(dim))
        w = np.prod([t[..., k] if o[k] else 1.0 - t[..., k] for k in range(dim)], axis=0)
        out += w * values[idx]
    return out


def solve_homogenized(A_hom, load, lattice, *, tol=DEFAULT_TOL):
    """Dirichlet solve of ``int A_hom grad u . grad phi = load(phi)`` on free nodes."""
    A_hom = np.atleast_2d(np.asarray(A_hom, dtype=float))
    coeff = np.broadcast_to(A_hom, lattice.elem_shape + A_hom.shape)
    K = lattice.stiffness(coeff)[lattice.free][:, lattice.free]
    rhs = np.asarray(load).ravel()[lattice.free]
    if not np.any(rhs):
        return np.zeros(lattice.free.size), 0, 0.0
    return solve_spd(K.tocsr(), rhs, tol=tol)


def u1_tilde_load(c, g: MacroFunction, lattice):
    """Weak load ``-sum c_ijk int d2_ij g d_k phi`` of the ``u1~`` problem."""
    xq = lattice.quad_points()
    hess = g.hessian(xq)
    q = np.einsum("ijk,...ij->...k", np.asarray(c, dtype=float), hess)
    return -lattice.load_flux(q)


def solve_u1_tilde(A_hom, c, g: MacroFunction, lattice, *, tol=DEFAULT_TOL) -> FineField:
    """Zero-Dirichlet solution of ``div(A_hom grad u) = -sum c_ijk d3_ijk g``."""
    c = np.asarray(c, dtype=float)
    if not np.any(c):
        return FineField(lattice.dim, lattice.cells, np.zeros(lattice.node_shape),
                         {"field": "u1_tilde"})
    load = u1_tilde_load(c, g, lattice)
    x, it, res = solve_homogenized(A_hom, load, lattice, tol=tol)
    return FineField.from_free(lattice, x, {"field": "u1_tilde", "iterations": it,
                                            "residual": res})
