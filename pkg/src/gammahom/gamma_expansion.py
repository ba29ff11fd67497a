"""Zeroth and first order limit functionals, normalized energy gaps and rate fits."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from gammahom.cell_problems import CorrectorSet
from gammahom.fem import Lattice
from gammahom.macro_fields import FineField, MacroFunction
from gammahom.two_scale import TwoScaleExpansion

MACRO_RESOLUTION = 512


def _macro_lattice(dim, resolution):
    return Lattice(dim, resolution, periodic=False)


def derivative_products(g: MacroFunction, resolution=MACRO_RESOLUTION) -> np.ndarray:
    """``T[a, b, c] = int d_a g d2_bc g`` by tensor Gauss quadrature."""
    lat = _macro_lattice(g.dim, resolution)
    xq = lat.quad_points()
    g1, g2 = g.grad(xq), g.hessian(xq)
    N = g.dim
    T = np.empty((N, N, N))
    for a in range(N):
        for b in range(N):
            for c in range(N):
                T[a, b, c] = lat.integrate(g1[..., a] * g2[..., b, c])
    return T


def F0_hom(u, A_hom, f, *, linear_term_factor=2.0, resolution=MACRO_RESOLUTION) -> float:
    """``int A_hom grad u . grad u - lambda int f u`` for an analytic or lattice ``u``."""
    A_hom = np.atleast_2d(np.asarray(A_hom, dtype=float))
    if isinstance(u, FineField):
        lat = u.lattice
        xq = lat.quad_points()
        val, grad = lat.values_at_quad(u.values), lat.grads_at_quad(u.values)
    else:
        lat = _macro_lattice(u.dim, resolution)
        xq = lat.quad_points()
        val, grad = u(xq), u.grad(xq)
    quad = lat.integrate(np.einsum("...k,kl,...l->...", grad, A_hom, grad))
    return quad - linear_term_factor * lat.integrate(f(xq) * val)


@dataclass(frozen=True)
class F1HomResult:
    """First order limit value with its four groups and the cancellation audit."""

    value: float
    groups: dict
    cancelled: dict
    with_cancelled_terms: float

    def as_dict(self):
        return asdict(self)


def _grad_g_dot_grad_u(g, u1_tilde: FineField | None):
    """``S[j, l] = int d_j g d_l u1~`` on the lattice of ``u1~``."""
    N = g.dim
    if u1_tilde is None:
        return np.zeros((N, N))
    lat = u1_tilde.lattice
    g1 = g.grad(lat.quad_points())
    gu = lat.grads_at_quad(u1_tilde.values)
    return np.array([[lat.integrate(g1[..., j] * gu[..., l]) for l in range(N)]
                     for j in range(N)])


def F1_hom(g: MacroFunction, cs: CorrectorSet, f, *, linear_term_factor=2.0,
           u1_tilde: FineField | None = None, resolution=MACRO_RESOLUTION) -> F1HomResult:
    """First order limit functional evaluated at ``u0 = g``.

    Groups: ``moments`` (recentered first moments against ``grad(d_i g d_j g)``),
    ``psiA`` (``2 sum_i int <psi_i A> grad g . d_i grad g``), ``psiA_gradpsi``
    (``2 sum_ij int d_j g <psi_i A grad psi_j> . d_i grad g``) and ``mean_psi``
    (``-lambda sum_j <psi_j> int f d_j g``).
    """
    mo = cs.moments
    if mo.moments is None or not mo.cross:
        raise ValueError("corrector set is incomplete: moments or cross averages missing")
    if g.dim != cs.dim:
        raise ValueError("profile and correctors have different dimensions")
    T = derivative_products(g, resolution)
    # int d_k(d_i g d_j g) = T[j, k, i] + T[i, k, j]
    groups = {
        "moments": float(np.einsum("ijk,jki->", mo.moments, T)
                         + np.einsum("ijk,ikj->", mo.moments, T)),
        "psiA": float(2.0 * np.einsum("ikl,lik->", mo.psiA, T)),
        "psiA_gradpsi": float(2.0 * np.einsum("ijk,jik->", mo.psiA_gradpsi, T)),
    }
    lat = _macro_lattice(g.dim, resolution)
    xq = lat.quad_points()
    fq, g1 = f(xq), g.grad(xq)
    f_dg = np.array([lat.integrate(fq * g1[..., j]) for j in range(g.dim)])
    groups["mean_psi"] = float(-linear_term_factor * mo.psi_mean @ f_dg)
    value = float(sum(groups.values()))

    S = _grad_g_dot_grad_u(g, u1_tilde)
    cr = mo.cross
    cancelled = {
        "G2": float(2.0 * np.einsum("jrs,jrs->", cr["Ae_gradchi"], T)),
        "G5": float(2.0 * np.einsum("jrs,jrs->", cr["gradpsi_A_gradchi"], T)),
        "G3": float(-2.0 * np.einsum("jl,jl->", cr["Ae_gradpsi"], S)),
        "G6": float(-2.0 * np.einsum("jl,jl->", cr["gradpsi_A_gradpsi"], S)),
    }
    return F1HomResult(value, groups, cancelled, value + sum(cancelled.values()))


def F1_n_from_energy(F_n, n, F0_min) -> float:
    """``(F_n - F0_min) / eps_n``."""
    return (F_n - F0_min) * n


def F1_n(u: FineField, n, A, f, F0_min, *, linear_term_factor=2.0) -> float:
    from gammahom.fine_scale import energy_F
    return F1_n_from_energy(energy_F(u, A, n, f, linear_term_factor=linear_term_factor),
                            n, F0_min)


def recovery_sequence(g: MacroFunction, cs: CorrectorSet, n, lattice) -> FineField:
    """Nodal interpolant of ``g + eps sum_i psi_i(x/eps) d_i g``."""
    exp = TwoScaleExpansion(g, cs, n, None, order=1)
    return exp.on_lattice(lattice, {"field": "recovery"})


# -- fits ------------------------------------------------------------------------


def loglog_slope(ns, values) -> float:
    """Least-squares decay rate ``p`` in ``values ~ C n^-p``."""
    ns = np.asarray(ns, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    if ns.size < 3:
        raise ValueError("a rate fit needs at least 3 points")
    if np.any(v <= 0):
        raise ValueError("log-log fit needs nonzero values")
    return float(-np.polyfit(np.log(ns), np.log(v), 1)[0])


def richardson(coarse, fine, order=2):
    """Combine values at resolutions ``m`` and ``2m`` cancelling an ``m^-order`` term."""
    r = 2.0**order
    return (r * np.asarray(fine) - np.asarray(coarse)) / (r - 1.0)


def limit_fit(ns, values, tail=3):
    """Extrapolate ``values(eps)`` to ``eps = 0`` over the last ``tail`` points.

    Fits ``L + b eps`` (and ``+ c eps^2`` with four or more points).  Returns
    ``(L, coefficients)``.
    """
    ns = np.asarray(ns, dtype=float)
    v = np.asarray(values, dtype=float)
    if ns.size < 3:
        raise ValueError("a limit fit needs at least 3 points")
    k = min(max(tail, 3), ns.size)
    eps = 1.0 / ns[-k:]
    deg = 2 if k >= 4 else 1
    coef = np.polyfit(eps, v[-k:], deg)
    return float(coef[-1]), coef[::-1].tolist()


@dataclass
class NRecord:
    n: int
    F_n_min: float
    F1_n: float
    h1_resid: float
    l2_err: float
    F1_n_recovery: float = float("nan")
    h1_norm: float = float("nan")
    h1_resid_order1: float = float("nan")
    discretization_estimate: float = float("nan")
    levels: dict = field(default_factory=dict)


@dataclass
class ExpansionReport:
    """Per-n records plus the reference first order value and fitted rates."""

    records: list
    F0_min: float
    F1_hom: F1HomResult | None
    rates: dict = field(default_factory=dict)
    limits: dict = field(default_factory=dict)

    def __post_init__(self):
        self.records.sort(key=lambda r: r.n)
        for r in self.records:
            for k in ("F_n_min", "F1_n", "h1_resid", "l2_err"):
                if not np.isfinite(getattr(r, k)):
                    raise ValueError(f"non-finite {k} at n={r.n}")

    @property
    def ns(self):
        return [r.n for r in self.records]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])


def fit_rates(report: ExpansionReport, tail=3, min_n=4) -> ExpansionReport:
    """Fill ``report.rates`` and ``report.limits`` from its records.

    Decay rates use the records with ``n >= min_n``; limits use the last
    ``tail`` records.
    """
    ns = report.ns
    if len(ns) < 3:
        raise ValueError("rate fits need at least 3 n-values")
    keep = np.array(ns) >= min_n
    if keep.sum() < 3:
        keep[:] = True
    rates = {}
    for key in ("h1_resid", "l2_err", "h1_resid_order1"):
        vals = report.column(key)[keep]
        if np.all(np.isfinite(vals)) and np.all(vals > 0):
            rates[key] = loglog_slope(np.array(ns)[keep], vals)
    limits = {"F1_n": limit_fit(ns, report.column("F1_n"), tail)[0]}
    rec = report.column("F1_n_recovery")
    if np.all(np.isfinite(rec)):
        limits["F1_n_recovery"] = limit_fit(ns, rec, tail)[0]
    report.rates = rates
    report.limits = limits
    return report
