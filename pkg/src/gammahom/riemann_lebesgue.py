"""Zeroth and first order Riemann-Lebesgue limits for oscillating periodic weights.

Domains are unions of integer-translated unit cells.  All integrals use
composite Gauss-Legendre rules whose panels coincide with the periods of
``g(n x)``, so breakpoints of piecewise-smooth weights sit on panel edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from gammahom.macro_fields import MacroFunction

POINTS_PER_PERIOD = 64
TWO_PI = 2.0 * np.pi


def gauss_panels(edges, points=POINTS_PER_PERIOD):
    """Nodes and weights of a composite Gauss-Legendre rule on consecutive ``edges``."""
    x, w = np.polynomial.legendre.leggauss(points)
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    return (a + half * (x + 1.0)).ravel(), (half * w).ravel()


# -- periodic weights ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PeriodicScalar:
    """Y-periodic function of ``y_1`` with optional closed-form ``<g>`` and ``<y_1 g>``."""

    name: str
    func: Callable = field(repr=False)
    mean: float | None = None
    first_moment: float | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, y):
        """Evaluate at points ``y`` of shape ``(..., N)``."""
        return self.func(np.asarray(y, dtype=float)[..., 0])

    def eval1d(self, t):
        return self.func(np.asarray(t, dtype=float))

    def moments(self, shift=0.0, points=4 * POINTS_PER_PERIOD):
        """``(<g_s>, <y_1 g_s>)`` over ``[s, s + 1)`` for the translate ``g_s(y) = g(y - s)``.

        With ``s = 0`` these are the plain cell moments.  Breakpoints of every
        preset sit at the integers, i.e. on the cell edges of the translated pair.
        """
        t, w = gauss_panels(np.array([shift, shift + 1.0]), points)
        gv = self.eval1d(t - shift)
        return float(w @ gv), float(w @ (t * gv))

    def check_periodic(self, samples=33):
        t = np.linspace(-2.0, 2.0, samples) + 0.123
        return float(np.abs(self.eval1d(t + 1.0) - self.eval1d(t)).max())


def sawtooth():
    return PeriodicScalar("sawtooth", lambda t: np.mod(t, 1.0), 0.5, 1.0 / 3.0)


def sine(k=1):
    k = int(k)
    if k < 1:
        raise ValueError("sine frequency must be a positive integer")
    return PeriodicScalar("sine", lambda t: np.sin(TWO_PI * k * t), 0.0,
                          -1.0 / (TWO_PI * k), {"k": k})


def cosine(mean=2.0, amplitude=1.0):
    return PeriodicScalar("cosine", lambda t: mean + amplitude * np.cos(TWO_PI * t),
                          mean, mean / 2.0, {"mean": mean, "amplitude": amplitude})


def constant(value=1.0):
    return PeriodicScalar("constant", lambda t: np.full(np.shape(t), float(value)),
                          float(value), float(value) / 2.0, {"value": value})


WEIGHTS = {"sawtooth": sawtooth, "sine": sine, "cosine": cosine, "constant": constant}


def make_weight(name, **params):
    try:
        return WEIGHTS[name](**params)
    except KeyError:
        raise ValueError(f"unknown periodic weight {name!r}; valid presets: "
                         f"{', '.join(sorted(WEIGHTS))}") from None


# -- test functions ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Smooth ``phi`` with gradient, as used on the right of the first order limit."""

    name: str
    dim: int
    value: Callable = field(repr=False)
    grad: Callable = field(repr=False)

    def __call__(self, x):
        return self.value(x)


def make_test_function(name, dim=1):
    if name == "x":
        return TestFunction("x", dim, lambda x: x[..., 0],
                            lambda x: np.eye(dim)[0] * np.ones(x.shape))
    if name == "x2":
        def grad(x):
            out = np.zeros(x.shape)
            out[..., 0] = 2.0 * x[..., 0]
            return out
        return TestFunction("x2", dim, lambda x: x[..., 0] ** 2, grad)
    if name in ("sine4", "bump"):
        g = MacroFunction(name, dim)
        return TestFunction(name, dim, g.value, g.grad)
    raise ValueError(f"unknown test function {name!r}; valid presets: bump, sine4, x, x2")


# -- domains -------------------------------------------------------------------------


def _cells(dim, cells):
    if cells is None:
        return np.zeros((1, dim), dtype=int)
    arr = np.asarray(cells)
    if arr.ndim != 2 or arr.shape[1] != dim or not np.issubdtype(arr.dtype, np.integer):
        raise ValueError("the domain must be a list of integer cell offsets, one row per cell")
    if len({tuple(r) for r in arr.tolist()}) != len(arr):
        raise ValueError("domain cells must be pairwise disjoint")
    return arr


def _domain_rule(dim, n, cells, points):
    """Tensor composite rule over the union of cells, one panel per period ``1/n``."""
    t, w = gauss_panels(np.arange(n + 1) / n, points)
    pts, wts = [], []
    for c in _cells(dim, cells):
        mesh = np.meshgrid(*([t] * dim), indexing="ij")
        x = np.stack(mesh, -1).reshape(-1, dim) + c
        ww = np.ones(1)
        for _ in range(dim):
            ww = np.multiply.outer(ww, w).ravel()
        pts.append(x)
        wts.append(ww)
    return np.concatenate(pts), np.concatenate(wts)


# -- limits --------------------------------------------------------------------------


def _exact_or_quadrature(g: PeriodicScalar, shift=0.0):
    if shift == 0.0 and g.mean is not None and g.first_moment is not None:
        return g.mean, g.first_moment
    return g.moments(shift)


def recentered_moment(g: PeriodicScalar, dim=1, shift=0.0):
    """``<y g> - <y><g>`` for ``g`` and the cell translated together by ``shift e_1``."""
    mean, m1 = _exact_or_quadrature(g, shift)
    ybar = 0.5 + shift
    out = np.zeros(dim)
    out[0] = m1 - ybar * mean
    # along the other axes g is constant, so the recentered moment vanishes
    return out


def rl_limit(g: PeriodicScalar, phi: TestFunction, cells=None, *, shift=0.0,
             points=POINTS_PER_PERIOD) -> float:
    """``int_Omega grad phi . (<y g> - <y><g>)``."""
    x, w = _domain_rule(phi.dim, 8, cells, points)
    grad_int = w @ phi.grad(x)
    return float(grad_int @ recentered_moment(g, phi.dim, shift))


def rl_empirical(g: PeriodicScalar, phi: TestFunction, n: int, cells=None, *,
                 points=POINTS_PER_PERIOD, shift=0.0) -> float:
    """``D_n = n [int g(n x) phi - <g> int phi]`` with period-aligned Gauss panels.

    A nonzero ``shift`` translates the domain, the oscillation grid and ``phi``
    rigidly by ``shift e_1`` and integrates in the translated frame.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x, w = _domain_rule(phi.dim, n, cells, points)
    offset = np.zeros(phi.dim)
    offset[0] = shift
    x = x + offset
    pv = phi(x - offset)
    mean = g.mean if g.mean is not None else g.moments()[0]
    val = n * (w @ (g.eval1d(n * (x[:, 0] - shift)) * pv) - mean * (w @ pv))
    if not np.isfinite(val):
        raise FloatingPointError("quadrature produced a non-finite value")
    return float(val)


# -- nonlinear variant -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PeriodicIntegrand:
    """``V(y, t)`` periodic in ``y_1`` with an analytic ``d_t V``."""

    name: str
    V: Callable = field(repr=False)
    dV: Callable = field(repr=False)
    params: dict = field(default_factory=dict)


def integrand_linear(weight: PeriodicScalar):
    return PeriodicIntegrand(f"linear[{weight.name}]", lambda y, t: weight.eval1d(y) * t,
                             lambda y, t: weight.eval1d(y) * np.ones_like(t))


def integrand_quadratic(mean=2.0, amplitude=1.0):
    def a(y):
        return mean + amplitude * np.cos(TWO_PI * y)
    return PeriodicIntegrand("quadratic", lambda y, t: a(y) * t**2, lambda y, t: 2.0 * a(y) * t,
                             {"mean": mean, "amplitude": amplitude})


def integrand_homogeneous(power=2.0):
    return PeriodicIntegrand("homogeneous", lambda y, t: np.ones_like(y) * t**power,
                             lambda y, t: np.ones_like(y) * power * t ** (power - 1.0),
                             {"power": power})


def rl_nonlinear(V: PeriodicIntegrand, phi: TestFunction, n: int, cells=None, *,
                 points=POINTS_PER_PERIOD, cell_points=POINTS_PER_PERIOD):
    """Scaled discrepancy of ``int V(n x, phi(x))`` and its predicted limit.

    Returns ``(D_n, L)`` where ``D_n = n [int V(nx, phi) - int <V(., phi(x))>]``
    and ``L = int <d_t V(y, phi(x)) y> . grad phi - <d_t V(., phi(x))><y> . grad phi``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x, w = _domain_rule(phi.dim, n, cells, points)
    pv = phi(x)
    yq, wy = gauss_panels(np.array([0.0, 1.0]), cell_points)
    avg_V = V.V(yq[None, :], pv[:, None]) @ wy
    D = n * (w @ (V.V(n * x[:, 0], pv) - avg_V))

    xl, wl = _domain_rule(phi.dim, 8, cells, points)
    pl, gl = phi(xl), phi.grad(xl)
    dv = V.dV(yq[None, :], pl[:, None])
    first = (dv * yq[None, :]) @ wy
    mean = dv @ wy
    L = wl @ ((first - 0.5 * mean) * gl[:, 0])
    return float(D), float(L)


# -- reports -------------------------------------------------------------------------


@dataclass
class RLReport:
    name: str
    ns: list
    D: list
    limit: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        order = np.argsort(self.ns)
        self.ns = [int(self.ns[i]) for i in order]
        self.D = [float(self.D[i]) for i in order]

    @property
    def errors(self):
        return np.abs(np.array(self.D) - self.limit)


def rl_report(g: PeriodicScalar, phi: TestFunction, ns, cells=None) -> RLReport:
    L = rl_limit(g, phi, cells)
    D = [rl_empirical(g, phi, int(n), cells) for n in ns]
    return RLReport(f"{g.name}/{phi.name}", list(ns), D, L)


def rl_nonlinear_report(V: PeriodicIntegrand, phi: TestFunction, ns, cells=None) -> RLReport:
    out = [rl_nonlinear(V, phi, int(n), cells) for n in ns]
    return RLReport(f"{V.name}/{phi.name}", list(ns), [d for d, _ in out], out[0][1])


__all__ = ["PeriodicScalar", "TestFunction", "PeriodicIntegrand", "RLReport", "gauss_panels",
           "make_weight", "make_test_function", "rl_limit", "rl_empirical", "rl_nonlinear",
           "recentered_moment", "rl_report", "rl_nonlinear_report", "integrand_linear",
           "integrand_quadratic", "integrand_homogeneous"]
