"""Cell grids and Y-periodic coefficient fields with named analytic presets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from gammahom.fem import Lattice

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class CellGrid:
    """Uniform periodic lattice on ``Y = [0, 1)^N`` with ``M`` elements per axis."""

    dim: int
    M: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"cell problems are implemented for N in (1, 2), got {self.dim}")
        if self.M < 4 or self.M % 2:
            raise ValueError(f"cell resolution must be even and >= 4, got {self.M}")

    @property
    def h(self):
        return 1.0 / self.M

    @property
    def lattice(self):
        return Lattice(self.dim, self.M, periodic=True)


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Symmetric Y-periodic matrix field sampled at element midpoints of a cell grid.

    ``func`` maps points of shape ``(..., N)`` (any real coordinates; the
    preset wraps them into Y) to matrices ``(..., N, N)``.
    """

    grid: CellGrid
    samples: np.ndarray
    alpha: float
    beta: float
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    preset: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        N = self.grid.dim
        expected = (self.grid.M,) * N + (N, N)
        if self.samples.shape != expected:
            raise ValueError(f"samples have shape {self.samples.shape}, expected {expected}")
        if not (0 < self.alpha <= self.beta):
            raise ValueError(f"need 0 < alpha <= beta, got alpha={self.alpha}, beta={self.beta}")
        check_elliptic(self.samples, self.alpha, self.beta)
        self.samples.setflags(write=False)

    @classmethod
    def from_function(cls, func, grid, alpha, beta, preset="custom", params=None):
        samples = np.array(func(grid.lattice.element_midpoints()), dtype=float)
        return cls(grid, samples, float(alpha), float(beta), func, preset, dict(params or {}))

    def on_grid(self, grid):
        """Resample the same analytic field on another cell grid."""
        return CoefficientField.from_function(self.func, grid, self.alpha, self.beta,
                                              self.preset, self.params)

    def __call__(self, y):
        return self.func(np.asarray(y, dtype=float))

    @property
    def dim(self):
        return self.grid.dim

    @property
    def is_constant(self):
        s = self.samples.reshape(-1, self.dim, self.dim)
        return bool(np.all(s == s[0]))

    @property
    def is_scalar_identity_multiple(self):
        return self.alpha == self.beta

    def describe(self):
        return {"preset": self.preset, "params": self.params, "dim": self.dim,
                "alpha": self.alpha, "beta": self.beta}


def check_elliptic(samples, alpha, beta, slack=1e-12):
    """Reject non-symmetric samples or eigenvalues outside ``[alpha, beta]``."""
    N = samples.shape[-1]
    flat = samples.reshape(-1, N, N)
    if not np.all(np.isfinite(flat)):
        raise ValueError("coefficient samples contain non-finite values")
    asym = np.abs(flat - np.swapaxes(flat, 1, 2)).max()
    if asym > slack * max(1.0, np.abs(flat).max()):
        raise ValueError(f"coefficient is not symmetric (max |a_ij - a_ji| = {asym:.3e})")
    eig = np.linalg.eigvalsh(flat)
    lo, hi = eig.min(), eig.max()
    tol = slack * max(1.0, beta)
    if lo < alpha - tol or hi > beta + tol:
        raise ValueError(
            f"coefficient violates ellipticity bounds: eigenvalues in [{lo:.6g}, {hi:.6g}] "
            f"but declared [{alpha:.6g}, {beta:.6g}]")


# -- presets -----------------------------------------------------------------


def _wrap(y):
    return np.mod(y, 1.0)


def _iso(a, dim):
    return a[..., None, None] * np.eye(dim)


def identity(dim):
    def func(y):
        return np.broadcast_to(np.eye(dim), y.shape[:-1] + (dim, dim)).copy()
    return func, 1.0, 1.0


def cos1d(dim, amplitude=1.0, mean=2.0):
    """``a(y) = mean + amplitude cos(2 pi y_1)`` times the identity."""
    if abs(amplitude) >= mean:
        raise ValueError("cos1d needs |amplitude| < mean for ellipticity")

    def func(y):
        return _iso(mean + amplitude * np.cos(TWO_PI * y[..., 0]), dim)

    return func, mean - abs(amplitude), mean + abs(amplitude)


def laminate(dim, amplitude=1.0, mean=2.0, transverse=1.0):
    """``diag(mean + amplitude cos(2 pi y_1), transverse)``: layers normal to e_1."""
    if dim != 2:
        raise ValueError("laminate is a two-dimensional preset")
    if abs(amplitude) >= mean or transverse <= 0:
        raise ValueError("laminate parameters violate ellipticity")

    def func(y):
        out = np.zeros(y.shape[:-1] + (2, 2))
        out[..., 0, 0] = mean + amplitude * np.cos(TWO_PI * y[..., 0])
        out[..., 1, 1] = transverse
        return out

    lo = min(mean - abs(amplitude), transverse)
    hi = max(mean + abs(amplitude), transverse)
    return func, lo, hi


def checkerboard(dim, a1=1.0, a2=10.0):
    """Two-phase piecewise-constant field (layers in 1D, checkerboard in 2D)."""
    if min(a1, a2) <= 0:
        raise ValueError("checkerboard phases must be positive")

    def func(y):
        parity = np.floor(2.0 * _wrap(y)).astype(int).sum(axis=-1) % 2
        return _iso(np.where(parity == 0, a1, a2), dim)

    return func, min(a1, a2), max(a1, a2)


_DEFAULT_FOURIER = {
    1: [[1, 0.6, 0.0], [2, 0.3, 0.7]],
    2: [[1, 0, 0.5, 0.0], [0, 1, 0.3, 0.5], [1, 1, 0.4, 1.0]],
}


def fourier(dim, coefficients=None, mean=2.0, anisotropy=1.0, angle=0.0):
    """Smooth field ``a(y) R diag(1, anisotropy) R^T`` with a truncated cosine series.

    ``coefficients`` rows are ``[k_1, .., k_N, amplitude]`` or with a trailing
    phase: ``a(y) = mean + sum amplitude cos(2 pi k.y + phase)``.
    """
    rows = _DEFAULT_FOURIER[dim] if coefficients is None else coefficients
    terms = []
    for row in rows:
        row = [float(v) for v in row]
        if len(row) not in (dim + 1, dim + 2):
            raise ValueError(f"fourier coefficient rows need {dim + 1} or {dim + 2} entries")
        k = np.array(row[:dim])
        phase = row[dim + 1] if len(row) == dim + 2 else 0.0
        terms.append((k, row[dim], phase))
    total = sum(abs(t[1]) for t in terms)
    if total >= mean:
        raise ValueError("fourier amplitudes must sum to less than the mean")
    if anisotropy <= 0:
        raise ValueError("anisotropy must be positive")
    if dim == 1:
        frame = np.eye(1)
    else:
        c, s = np.cos(angle), np.sin(angle)
        R = np.array([[c, -s], [s, c]])
        frame = R @ np.diag([1.0, anisotropy]) @ R.T

    def func(y):
        a = np.full(y.shape[:-1], mean, dtype=float)
        for k, amp, phase in terms:
            a = a + amp * np.cos(TWO_PI * (y @ k) + phase)
        return a[..., None, None] * frame

    eigs = np.linalg.eigvalsh(frame)
    return func, (mean - total) * eigs.min(), (mean + total) * eigs.max()


PRESETS = {
    "identity": identity,
    "cos1d": cos1d,
    "laminate": laminate,
    "checkerboard": checkerboard,
    "fourier": fourier,
}

SMOOTH_PRESETS = ("identity", "cos1d", "laminate", "fourier")


def make_coefficient(name, grid, **params):
    """Build a :class:`CoefficientField` from a preset id."""
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown coefficient preset {name!r}; valid presets: {', '.join(sorted(PRESETS))}"
        ) from None
    func, alpha, beta = factory(grid.dim, **params)
    return CoefficientField.from_function(func, grid, alpha, beta, preset=name, params=params)
