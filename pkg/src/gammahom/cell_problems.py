"""Periodic cell problems: first and second order correctors and cell constants.

All solves use Q1 elements on the periodic lattice of a :class:`CellGrid`
with the coefficient constant on each element.  Right-hand sides containing
distributional derivatives of ``A`` are kept in weak form, so rough presets
(checkerboard) are handled without pointwise differencing.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from gammahom.coefficients import CellGrid, CoefficientField, make_coefficient
from gammahom.linalg import DEFAULT_TOL, solve_spd

__all__ = [
    "CellGrid", "CoefficientField", "PeriodicField", "CorrectorSet", "make_coefficient",
    "solve_first_corrector", "compute_b", "solve_second_corrector", "homogenized_matrix",
    "cell_constants", "cell_moments", "cross_averages", "compute_correctors", "cell_energy",
]

ZERO_MEAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Nodal Q1 field on the periodic cell lattice."""

    grid: CellGrid
    values: np.ndarray
    zero_mean: bool = False
    residual: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape((self.grid.M,) * self.grid.dim)
        object.__setattr__(self, "values", vals)
        if self.zero_mean and abs(vals.mean()) > ZERO_MEAN_TOL:
            raise ValueError(f"field flagged zero-mean has average {vals.mean():.3e}")
        vals.setflags(write=False)

    @classmethod
    def zeros(cls, grid, zero_mean=True):
        return cls(grid, np.zeros((grid.M,) * grid.dim), zero_mean)

    def mean(self):
        return float(self.values.mean())

    def at_quad(self):
        return self.grid.lattice.values_at_quad(self.values)

    def grad_at_quad(self):
        return self.grid.lattice.grads_at_quad(self.values)

    def _locate(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.grid.dim:
            raise ValueError(f"points must have trailing dimension {self.grid.dim}")
        s = np.mod(y, 1.0) * self.grid.M
        base = np.floor(s).astype(np.int64)
        t = s - base
        base %= self.grid.M
        return base, t

    def interpolate(self, y):
        """Multilinear periodic interpolation at points ``y`` of shape ``(..., N)``."""
        base, t = self._locate(y)
        M, N = self.grid.M, self.grid.dim
        out = np.zeros(base.shape[:-1])
        for o in np.ndindex(*(2,) * N):
            idx = tuple((base[..., k] + o[k]) % M for k in range(N))
            w = np.prod([t[..., k] if o[k] else 1.0 - t[..., k] for k in range(N)], axis=0)
            out += w * self.values[idx]
        return out

    def gradient(self, y):
        """Gradient of the multilinear interpolant (one-sided on element faces)."""
        base, t = self._locate(y)
        M, N = self.grid.M, self.grid.dim
        out = np.zeros(base.shape)
        for o in np.ndindex(*(2,) * N):
            idx = tuple((base[..., k] + o[k]) % M for k in range(N))
            v = self.values[idx]
            for d in range(N):
                w = np.ones(base.shape[:-1])
                for k in range(N):
                    if k == d:
                        w = w * (1.0 if o[k] else -1.0)
                    else:
                        w = w * (t[..., k] if o[k] else 1.0 - t[..., k])
                out[..., d] += w * v
        return out * M


# -- weak forms ------------------------------------------------------------------


def _quad_broadcast(lattice, elem_vals):
    """Repeat element-constant data over the Gauss points: ``elem + (Q,) + tail``."""
    tail = elem_vals.shape[len(lattice.elem_shape):]
    return np.broadcast_to(elem_vals[..., None, :] if tail else elem_vals[..., None],
                           lattice.elem_shape + (lattice.n_quad,) + tail)


def _check_grid(A, grid):
    if A.grid != grid:
        raise ValueError(f"coefficient lives on {A.grid}, solver grid is {grid}")


def _stiffness(A):
    return A.grid.lattice.stiffness(A.samples)


def solve_first_corrector(A: CoefficientField, j: int, grid: CellGrid = None, *,
                          tol=DEFAULT_TOL, matrix=None) -> PeriodicField:
    """Zero-mean ``psi_j`` with ``int A (grad psi_j + e_j) . grad phi = 0`` for all ``phi``.

    ``j`` is zero-based.
    """
    grid = A.grid if grid is None else grid
    _check_grid(A, grid)
    if not 0 <= j < grid.dim:
        raise ValueError(f"axis index {j} out of range for N={grid.dim}")
    if A.is_constant:
        return PeriodicField.zeros(grid)
    lat = grid.lattice
    q = _quad_broadcast(lat, A.samples[..., :, j])
    rhs = -lat.load_flux(q).ravel()
    K = _stiffness(A) if matrix is None else matrix
    x, it, res = solve_spd(K, rhs, tol=tol, mean_zero=True)
    return PeriodicField(grid, x, zero_mean=True, residual=res, iterations=it)


def _b_functional(A, psi, i, j):
    """Nodal vector ``int (a_ij + a_ik d_k psi_j) phi - int a_ki psi_j d_k phi``."""
    lat = A.grid.lattice
    a = A.samples
    src = _quad_broadcast(lat, a[..., i, j]) + np.einsum(
        "...k,...qk->...q", a[..., i, :], psi[j].grad_at_quad())
    flux = _quad_broadcast(lat, a[..., :, i]) * psi[j].at_quad()[..., None]
    return lat.load_scalar(src) - lat.load_flux(flux)


def compute_b(A: CoefficientField, psi, i: int, j: int) -> PeriodicField:
    """``b_ij = a_ij + a_ik d_k psi_j + d_k(a_ki psi_j)`` as nodal values.

    The divergence term is applied to test functions; nodal values are the
    weak functional divided by the nodal volume ``h^N`` so that the nodal
    average equals the exact integral of ``b_ij`` over ``Y``.
    """
    for p in psi:
        if p.grid != A.grid:
            raise ValueError("correctors and coefficient are on different grids")
    vec = _b_functional(A, psi, i, j)
    return PeriodicField(A.grid, vec / A.grid.h ** A.grid.dim)


def solve_second_corrector(A: CoefficientField, b: PeriodicField, grid: CellGrid = None, *,
                           tol=DEFAULT_TOL, matrix=None) -> PeriodicField:
    """Zero-mean ``chi`` with ``-div(A grad chi) = b - <b>`` weakly."""
    grid = A.grid if grid is None else grid
    _check_grid(A, grid)
    if b.grid != grid:
        raise ValueError("b field and coefficient are on different grids")
    # undo the nodal-volume scaling: the load is the weak functional itself
    rhs = (b.values - b.mean()).ravel() * grid.h ** grid.dim
    if A.is_constant or not np.any(np.abs(rhs) > 1e-14 * max(1.0, np.abs(b.values).max())
                                   * grid.h ** grid.dim):
        return PeriodicField.zeros(grid)
    K = _stiffness(A) if matrix is None else matrix
    x, it, res = solve_spd(K, rhs, tol=tol, mean_zero=True)
    return PeriodicField(grid, x, zero_mean=True, residual=res, iterations=it)


def _flux_columns(A, psi):
    """``A (e_j + grad psi_j)`` at Gauss points, shape ``elem + (Q, N, N)`` with j last."""
    lat = A.grid.lattice
    N = A.grid.dim
    cols = []
    for j in range(N):
        g = psi[j].grad_at_quad().copy()
        g[..., j] += 1.0
        cols.append(np.einsum("...kl,...ql->...qk", A.samples, g))
    return np.stack(cols, axis=-1), lat


def homogenized_matrix(A: CoefficientField, psi) -> np.ndarray:
    """``a^hom_ij = <a_ij + a_ik d_k psi_j>``."""
    flux, lat = _flux_columns(A, psi)
    N = A.grid.dim
    out = np.empty((N, N))
    for i in range(N):
        for j in range(N):
            out[i, j] = lat.integrate(flux[..., i, j])
    return out


def cell_energy(A: CoefficientField, psi_j: PeriodicField, j: int) -> float:
    """``int_Y A (e_j + grad phi) . (e_j + grad phi)`` for a periodic field ``phi``."""
    lat = A.grid.lattice
    g = psi_j.grad_at_quad().copy()
    g[..., j] += 1.0
    return lat.integrate(np.einsum("...qk,...kl,...ql->...q", g, A.samples, g))


def cell_constants(A: CoefficientField, psi, chi) -> np.ndarray:
    """``c_ijk = <a_kl d_l chi_ij + a_ij psi_k>`` as an ``(N, N, N)`` array."""
    lat = A.grid.lattice
    N = A.grid.dim
    a = A.samples
    c = np.empty((N, N, N))
    psi_q = [p.at_quad() for p in psi]
    for i in range(N):
        for j in range(N):
            gchi = chi[i][j].grad_at_quad()
            for k in range(N):
                term = np.einsum("...l,...ql->...q", a[..., k, :], gchi)
                term = term + a[..., i, j][..., None] * psi_q[k]
                c[i, j, k] = lat.integrate(term)
    return c


@dataclass(frozen=True)
class CellMoments:
    """Cell averages and recentered first moments entering the first-order limit."""

    psiA: np.ndarray          # [i, k, l] = <psi_i a_kl>
    psiA_gradpsi: np.ndarray  # [i, j, :] = <psi_i A grad psi_j>
    psi_mean: np.ndarray      # [j] = <psi_j>
    moments: np.ndarray       # [i, j, :] = <y e_ij> - <y><e_ij>
    energy_density_mean: np.ndarray  # [i, j] = <e_ij>
    cross: dict = field(default_factory=dict)


def cell_moments(A: CoefficientField, psi) -> CellMoments:
    """Averages and ``<y>``-recentered first moments of the corrector energy densities.

    ``e_ij = a_ij + 2 A e_j . grad psi_i + A grad psi_i . grad psi_j``.
    """
    lat = A.grid.lattice
    N = A.grid.dim
    a = A.samples
    y = lat.quad_points()
    ybar = np.full(N, 0.5)
    psi_q = [p.at_quad() for p in psi]
    gpsi = [p.grad_at_quad() for p in psi]

    psiA = np.empty((N, N, N))
    for i in range(N):
        for k in range(N):
            for l in range(N):
                psiA[i, k, l] = lat.integrate(a[..., k, l][..., None] * psi_q[i])
    pagp = np.empty((N, N, N))
    for i in range(N):
        for j in range(N):
            flux = np.einsum("...kl,...ql->...qk", a, gpsi[j])
            for k in range(N):
                pagp[i, j, k] = lat.integrate(psi_q[i] * flux[..., k])
    psi_mean = np.array([lat.integrate(q) for q in psi_q])

    mom = np.empty((N, N, N))
    avg = np.empty((N, N))
    for i in range(N):
        for j in range(N):
            e = (_quad_broadcast(lat, a[..., i, j])
                 + 2.0 * np.einsum("...k,...qk->...q", a[..., :, j], gpsi[i])
                 + np.einsum("...qk,...kl,...ql->...q", gpsi[i], a, gpsi[j]))
            avg[i, j] = lat.integrate(e)
            for k in range(N):
                mom[i, j, k] = lat.integrate(y[..., k] * e) - ybar[k] * avg[i, j]
    return CellMoments(psiA, pagp, psi_mean, mom, avg)


CROSS_KEYS = ("Ae_gradchi", "gradpsi_A_gradchi", "Ae_gradpsi", "gradpsi_A_gradpsi")


def cross_averages(A: CoefficientField, psi, chi) -> dict:
    """Averages pairing ``A e_j`` or ``A grad psi_j`` with corrector gradients.

    ``Ae_gradchi[j, r, s] = <A e_j . grad chi_rs>``,
    ``gradpsi_A_gradchi[j, r, s] = <A grad psi_j . grad chi_rs>``,
    ``Ae_gradpsi[j, l] = <A e_j . grad psi_l>`` and
    ``gradpsi_A_gradpsi[j, l] = <A grad psi_j . grad psi_l>``.
    """
    lat = A.grid.lattice
    N = A.grid.dim
    a = A.samples
    gpsi = [p.grad_at_quad() for p in psi]
    flux_psi = [np.einsum("...kl,...ql->...qk", a, g) for g in gpsi]
    out = {"Ae_gradchi": np.empty((N, N, N)), "gradpsi_A_gradchi": np.empty((N, N, N)),
           "Ae_gradpsi": np.empty((N, N)), "gradpsi_A_gradpsi": np.empty((N, N))}
    for r in range(N):
        for s_ in range(N):
            gchi = chi[r][s_].grad_at_quad()
            for j in range(N):
                out["Ae_gradchi"][j, r, s_] = lat.integrate(
                    np.einsum("...k,...qk->...q", a[..., :, j], gchi))
                out["gradpsi_A_gradchi"][j, r, s_] = lat.integrate(
                    (flux_psi[j] * gchi).sum(-1))
    for j in range(N):
        for l in range(N):
            out["Ae_gradpsi"][j, l] = lat.integrate(
                np.einsum("...k,...qk->...q", a[..., :, j], gpsi[l]))
            out["gradpsi_A_gradpsi"][j, l] = lat.integrate((flux_psi[j] * gpsi[l]).sum(-1))
    return out


# -- the full set --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CorrectorSet:
    """Every cell-level quantity for one coefficient on one cell grid."""

    grid: CellGrid
    coefficient: dict
    psi: list
    chi: list
    b: list
    A_hom: np.ndarray
    c: np.ndarray
    moments: CellMoments
    diagnostics: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.grid.dim

    @property
    def psi_mean(self):
        return self.moments.psi_mean

    def check_invariants(self, alpha, beta, *, smooth=True, tol=DEFAULT_TOL):
        """Return a dict of named boolean checks (see :func:`compute_correctors`)."""
        d = self.diagnostics
        N = self.dim
        eig = np.linalg.eigvalsh(0.5 * (self.A_hom + self.A_hom.T))
        checks = {
            "zero_mean": all(abs(p.mean()) <= ZERO_MEAN_TOL for p in self.psi)
            and all(abs(x.mean()) <= ZERO_MEAN_TOL for row in self.chi for x in row),
            "weak_residual": max(d.get("residuals", [0.0])) <= tol,
            "symmetry": float(np.abs(self.A_hom - self.A_hom.T).max()) <= 1e-12,
            "ellipticity": bool(eig.min() >= alpha - 1e-8 and eig.max() <= beta + 1e-8),
            "b_consistency": float(np.abs(np.array(d["b_means"]) - self.A_hom).max()) <= 1e-8,
            "energy_identity": float(np.abs(np.array(d["cell_energies"])
                                            - np.diag(self.A_hom)).max()) <= 1e-8,
            "c_finite": bool(np.all(np.isfinite(self.c))),
        }
        if not smooth:
            checks["note"] = "rough preset: tolerance checks are informational"
        return checks

    # -- persistence --------------------------------------------------------

    def _arrays(self):
        N = self.dim
        return {
            "psi": np.stack([p.values for p in self.psi]),
            "chi": np.stack([np.stack([self.chi[i][j].values for j in range(N)])
                             for i in range(N)]),
            "b": np.stack([np.stack([self.b[i][j].values for j in range(N)])
                           for i in range(N)]),
            "A_hom": self.A_hom,
            "c": self.c,
            "psiA": self.moments.psiA,
            "psiA_gradpsi": self.moments.psiA_gradpsi,
            "psi_mean": self.moments.psi_mean,
            "moments": self.moments.moments,
            "energy_density_mean": self.moments.energy_density_mean,
            **{f"cross_{k}": v for k, v in self.moments.cross.items()},
        }

    def save(self, path):
        """Write ``<path>.npz`` with the arrays and ``<path>.json`` with metadata."""
        path = Path(path)
        np.savez(path.with_suffix(".npz"), **self._arrays())
        meta = {"format": "gammahom-correctors", "version": 1, "dim": self.dim,
                "M": self.grid.M, "coefficient": self.coefficient,
                "diagnostics": _jsonable(self.diagnostics)}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        if meta.get("format") != "gammahom-correctors":
            raise ValueError(f"{path} is not a corrector container")
        grid = CellGrid(meta["dim"], meta["M"])
        N = grid.dim
        with np.load(path.with_suffix(".npz")) as z:
            arr = {k: z[k] for k in z.files}
        psi = [PeriodicField(grid, arr["psi"][j], zero_mean=True) for j in range(N)]
        chi = [[PeriodicField(grid, arr["chi"][i, j], zero_mean=True) for j in range(N)]
               for i in range(N)]
        b = [[PeriodicField(grid, arr["b"][i, j]) for j in range(N)] for i in range(N)]
        moments = CellMoments(arr["psiA"], arr["psiA_gradpsi"], arr["psi_mean"],
                              arr["moments"], arr["energy_density_mean"],
                              {k: arr[f"cross_{k}"] for k in CROSS_KEYS if f"cross_{k}" in arr})
        return cls(grid, meta["coefficient"], psi, chi, b, arr["A_hom"], arr["c"], moments,
                   meta.get("diagnostics", {}))

    def fingerprint(self):
        h = hashlib.sha256()
        for k, v in sorted(self._arrays().items()):
            h.update(k.encode())
            h.update(np.ascontiguousarray(v).tobytes())
        return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def compute_correctors(A: CoefficientField, *, tol=DEFAULT_TOL, jobs=1) -> CorrectorSet:
    """Solve all first and second order cell problems and collect cell constants."""
    grid = A.grid
    N = grid.dim
    K = None if A.is_constant else _stiffness(A)

    def run(tasks):
        if jobs > 1 and len(tasks) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                return list(pool.map(lambda f: f(), tasks))
        return [f() for f in tasks]

    psi = run([lambda j=j: solve_first_corrector(A, j, grid, tol=tol, matrix=K)
               for j in range(N)])
    b = [[compute_b(A, psi, i, j) for j in range(N)] for i in range(N)]
    flat = run([lambda i=i, j=j: solve_second_corrector(A, b[i][j], grid, tol=tol, matrix=K)
                for i in range(N) for j in range(N)])
    chi = [flat[i * N:(i + 1) * N] for i in range(N)]
    A_hom = homogenized_matrix(A, psi)
    c = cell_constants(A, psi, chi)
    moments = replace(cell_moments(A, psi), cross=cross_averages(A, psi, chi))
    diagnostics = {
        "residuals": [p.residual for p in psi] + [x.residual for x in flat],
        "iterations": [p.iterations for p in psi] + [x.iterations for x in flat],
        "b_means": [[b[i][j].mean() for j in range(N)] for i in range(N)],
        "cell_energies": [cell_energy(A, psi[j], j) for j in range(N)],
        "alpha": A.alpha,
        "beta": A.beta,
    }
    return CorrectorSet(grid, A.describe(), psi, chi, b, A_hom, c, moments, diagnostics)
