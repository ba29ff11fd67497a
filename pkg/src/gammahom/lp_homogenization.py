"""Mass-constrained minimization of oscillating integral functionals without gradients.

For strictly convex ``p -> V(y, p)`` the constrained minimizers satisfy
``d_p V(x/eps, v(x)) = c`` pointwise, so both the oscillating and the
homogenized problems reduce to inverting ``d_p V`` and solving one scalar
equation for the multiplier ``c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from gammahom.riemann_lebesgue import gauss_panels

POINTS_PER_PERIOD = 64
TWO_PI = 2.0 * np.pi


class RootFindError(RuntimeError):
    pass


def invert_increasing(func, dfunc, target, *, xtol=1e-15, maxiter=200):
    """Solve ``func(p) = target`` elementwise for strictly increasing ``func``.

    The bracket grows geometrically from ``p = 0``; bisection narrows it and
    safeguarded Newton steps finish.
    """
    target = np.asarray(target, dtype=float)
    lo = np.zeros_like(target)
    hi = np.zeros_like(target)
    f0 = func(lo) - target
    step = np.ones_like(target)
    up = f0 < 0
    down = f0 > 0
    hi = np.where(up, step, hi)
    lo = np.where(down, -step, lo)
    # doubling past the float range ends in inf, which is reported below
    with np.errstate(over="ignore"):
        for _ in range(2000):
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise RootFindError("could not bracket the root")
            need_up = up & (func(hi) - target < 0)
            need_down = down & (func(lo) - target > 0)
            if not (need_up.any() or need_down.any()):
                break
            lo = np.where(need_up, hi, lo)
            hi = np.where(need_up, 2.0 * hi, hi)
            hi = np.where(need_down, lo, hi)
            lo = np.where(need_down, 2.0 * lo, lo)
        else:
            raise RootFindError("could not bracket the root")
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        fm = func(mid) - target
        lo = np.where(fm < 0, mid, lo)
        hi = np.where(fm < 0, hi, mid)
    p = 0.5 * (lo + hi)
    for _ in range(maxiter):
        fp = func(p) - target
        if not np.any(fp):
            return p
        d = dfunc(p)
        lo = np.where(fp < 0, np.maximum(lo, p), lo)
        hi = np.where(fp > 0, np.minimum(hi, p), hi)
        newton = p - fp / np.where(d > 0, d, np.inf)
        inside = (newton >= lo) & (newton <= hi) & np.isfinite(newton)
        new = np.where(fp == 0, p, np.where(inside, newton, 0.5 * (lo + hi)))
        if np.all(np.abs(new - p) <= xtol * np.maximum(1.0, np.abs(p))):
            return new
        p = new
    return p


@dataclass(frozen=True, eq=False)
class ConvexIntegrand:
    """Periodic, strictly convex scalar integrand ``V(y, p)`` with derivatives in ``p``.

    ``inverse_closed`` is an optional closed-form ``c -> (d_p V)^-1(y)[c]``;
    :meth:`inverse` always uses the generic bracketing Newton solver.
    """

    name: str
    V: Callable = field(repr=False)
    dV: Callable = field(repr=False)
    d2V: Callable = field(repr=False)
    exponent: float
    c1: float
    c2: float
    inverse_closed: Callable | None = field(default=None, repr=False)
    params: dict = field(default_factory=dict)

    def inverse(self, y, c):
        y, c = np.broadcast_arrays(np.asarray(y, float), np.asarray(c, float))
        return invert_increasing(lambda p: self.dV(y, p), lambda p: self.d2V(y, p), c)

    def invert(self, y, c, method="auto"):
        if method == "closed" or (method == "auto" and self.inverse_closed is not None):
            if self.inverse_closed is None:
                raise ValueError(f"{self.name} has no closed-form inverse")
            y, c = np.broadcast_arrays(np.asarray(y, float), np.asarray(c, float))
            return self.inverse_closed(y, c)
        return self.inverse(y, c)

    def check(self, samples=41):
        """Sampled strict monotonicity of ``d_p V``, periodicity and growth bounds."""
        y = np.linspace(0.0, 1.0, samples)[:, None]
        p = np.linspace(-5.0, 5.0, samples)[None, :]
        d = self.dV(y, p)
        growth_lo = self.c1 * (np.abs(p) ** self.exponent - 1.0)
        growth_hi = self.c2 * (np.abs(p) ** self.exponent + 1.0)
        v = self.V(y, p)
        return {
            "strictly_convex": bool(np.all(np.diff(d, axis=1) > 0)),
            "periodic": bool(np.allclose(self.V(y + 1.0, p), v, rtol=1e-12, atol=1e-12)),
            "growth": bool(np.all(growth_lo <= v + 1e-12) and np.all(v <= growth_hi + 1e-12)),
        }


def _weight(mean, amplitude):
    if abs(amplitude) >= mean:
        raise ValueError("need |amplitude| < mean for a positive weight")
    return lambda y: mean + amplitude * np.cos(TWO_PI * y)


def quadratic(mean=2.0, amplitude=1.0):
    """``V = a(y) p^2`` with ``a = mean + amplitude cos(2 pi y)``."""
    a = _weight(mean, amplitude)
    return ConvexIntegrand(
        "quadratic", lambda y, p: a(y) * p**2, lambda y, p: 2.0 * a(y) * p,
        lambda y, p: 2.0 * a(y) * np.ones_like(p), 2.0,
        mean - abs(amplitude), mean + abs(amplitude),
        lambda y, c: c / (2.0 * a(y)), {"mean": mean, "amplitude": amplitude})


def quartic(mean=2.0, amplitude=1.0):
    """``V = a(y) p^4``; the closed-form inverse is a real cube root."""
    a = _weight(mean, amplitude)
    return ConvexIntegrand(
        "quartic", lambda y, p: a(y) * p**4, lambda y, p: 4.0 * a(y) * p**3,
        lambda y, p: 12.0 * a(y) * p**2, 4.0,
        mean - abs(amplitude), mean + abs(amplitude),
        lambda y, c: np.cbrt(c / (4.0 * a(y))), {"mean": mean, "amplitude": amplitude})


def mixed(mean=2.0, amplitude=1.0, quartic_weight=0.5):
    """``V = a(y) p^2 + b p^4``: no closed-form inverse."""
    a = _weight(mean, amplitude)
    b = float(quartic_weight)
    if b <= 0:
        raise ValueError("quartic_weight must be positive")
    return ConvexIntegrand(
        "mixed", lambda y, p: a(y) * p**2 + b * p**4,
        lambda y, p: 2.0 * a(y) * p + 4.0 * b * p**3,
        lambda y, p: 2.0 * a(y) + 12.0 * b * p**2, 4.0,
        b, mean + abs(amplitude) + b, None,
        {"mean": mean, "amplitude": amplitude, "quartic_weight": b})


INTEGRANDS = {"quadratic": quadratic, "quartic": quartic, "mixed": mixed}


def make_integrand(name, **params):
    try:
        return INTEGRANDS[name](**params)
    except KeyError:
        raise ValueError(f"unknown integrand {name!r}; valid presets: "
                         f"{', '.join(sorted(INTEGRANDS))}") from None


# -- minimization ----------------------------------------------------------------------


@dataclass
class ConstrainedMin:
    value: float
    multiplier: float
    mass: float
    target_mass: float
    minimizer: Callable | None = field(default=None, repr=False)
    euler_lagrange_spread: float = 0.0


def _solve_multiplier(mass_of, dmass_of, target):
    """Scalar root of the increasing map ``c -> mass_of(c)``."""
    c = invert_increasing(lambda c: mass_of(float(c)), lambda c: dmass_of(float(c)),
                          np.array(float(target)))
    return float(c)


def _cell_rule(points=POINTS_PER_PERIOD):
    return gauss_panels(np.array([0.0, 1.0]), points)


def _multiplier(V, y, w, target, method):
    """``c`` with ``sum w (d_p V)^-1(y)[c] = target``."""
    if target == 0.0:
        return 0.0

    def mass(c):
        return float(w @ V.invert(y, c, method))

    def dmass(c):
        p = V.invert(y, c, method)
        return float(w @ (1.0 / V.d2V(y, p)))

    return _solve_multiplier(np.vectorize(mass), np.vectorize(dmass), target)


def v_hom(V: ConvexIntegrand, z, *, method="auto", points=POINTS_PER_PERIOD):
    """``V_hom(z)`` from the cell problem with optimal perturbation ``(d_p V)^-1[c] - z``."""
    y, w = _cell_rule(points)
    c = _multiplier(V, y, w, float(z), method)
    p = V.invert(y, c, method)
    return float(w @ V.V(y, p)), c


def min_G_hom(V: ConvexIntegrand, m, *, volume=1.0, method="auto") -> ConstrainedMin:
    """Constant minimizer ``m / |Omega|`` with value ``|Omega| V_hom(m / |Omega|)``."""
    z = m / volume
    val, c = v_hom(V, z, method=method)
    return ConstrainedMin(volume * val, c, m, m, lambda x: np.full(np.shape(x), z))


def min_G_n(V: ConvexIntegrand, m, n, *, method="auto",
            points=POINTS_PER_PERIOD) -> ConstrainedMin:
    """Oscillating problem on ``Omega = (0, 1)``: ``v_n(x) = (d_p V)^-1(n x)[c_n]``.

    ``c_n`` solves the mass constraint on the full ``x`` quadrature (one
    Gauss panel per period), not through the cell average.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x, w = gauss_panels(np.arange(n + 1) / n, points)
    y = np.mod(n * x, 1.0)
    c = _multiplier(V, y, w, float(m), method)
    v = V.invert(y, c, method)
    spread = float(np.abs(V.dV(y, v) - c).max()) if m != 0 else 0.0

    def minimizer(xx, c=c):
        return V.invert(np.mod(n * np.asarray(xx, float), 1.0), c, method)

    return ConstrainedMin(float(w @ V.V(y, v)), c, float(w @ v), m, minimizer, spread)


@dataclass
class LpReport:
    integrand: str
    mass: float
    hom: float
    rows: list
    tolerance: float

    @property
    def gaps(self):
        return [r["gap"] for r in self.rows]

    @property
    def passed(self):
        return all(g <= self.tolerance for g in self.gaps)


def verify_equality(V: ConvexIntegrand, m, ns, *, method="auto", tolerance=None) -> LpReport:
    """Compare ``min G_n`` with ``min G_hom`` for every ``n``.

    Default tolerance: ``1e-8`` with closed-form inverses, ``1e-6`` with Newton.
    """
    closed = method == "closed" or (method == "auto" and V.inverse_closed is not None)
    tol = tolerance if tolerance is not None else (1e-8 if closed else 1e-6)
    hom = min_G_hom(V, m, method=method)
    rows = []
    for n in ns:
        r = min_G_n(V, m, int(n), method=method)
        rows.append({"n": int(n), "min_G_n": r.value, "gap": abs(r.value - hom.value),
                     "c_n": r.multiplier, "mass_error": abs(r.mass - m),
                     "euler_lagrange_spread": r.euler_lagrange_spread})
    return LpReport(V.name, m, hom.value, rows, tol)
