"""Fine-scale Dirichlet solves at ``eps = 1/n``, energies and ``H^-1`` residual norms."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from gammahom.coefficients import CoefficientField
from gammahom.fem import Lattice
from gammahom.linalg import DEFAULT_TOL, solve_spd
from gammahom.macro_fields import FineField


@dataclass(frozen=True)
class FineGrid:
    """Dirichlet lattice over ``Omega = (0, 1)^N`` with ``m`` elements per period cell."""

    dim: int
    n: int
    m: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.m < 8:
            raise ValueError(f"each period cell needs m >= 8 elements, got {self.m}")
        if self.P % 2:
            raise ValueError(f"global resolution n*m must be even, got {self.P}")

    @property
    def P(self):
        return self.n * self.m

    @property
    def eps(self):
        return 1.0 / self.n

    @property
    def lattice(self):
        return Lattice(self.dim, self.P, periodic=False)


def fine_coefficient(A: CoefficientField, grid: FineGrid) -> np.ndarray:
    """Element samples of ``A(x/eps)`` on the fine lattice.

    When the cell grid of ``A`` has ``M = m`` the cell samples are tiled, which
    replicates the period exactly; otherwise ``A`` is evaluated at wrapped
    midpoints.
    """
    if A.grid.M == grid.m and A.dim == grid.dim:
        return np.tile(A.samples, (grid.n,) * grid.dim + (1, 1))
    mid = grid.lattice.element_midpoints()
    return np.asarray(A(np.mod(grid.n * mid, 1.0)), dtype=float)


class FineOperator:
    """Stiffness of ``A(x/eps)`` on a fine grid, restricted to interior nodes."""

    def __init__(self, A: CoefficientField, grid: FineGrid):
        self.A = A
        self.grid = grid
        self.lattice = grid.lattice
        self.samples = fine_coefficient(A, grid)

    @cached_property
    def matrix(self):
        lat = self.lattice
        return lat.stiffness(self.samples)[lat.free][:, lat.free].tocsr()

    def load(self, f):
        """``int f phi_a`` on interior nodes."""
        lat = self.lattice
        return lat.load_scalar(f(lat.quad_points())).ravel()[lat.free]


def solve_fine(A: CoefficientField, n: int, f, grid: FineGrid, *, linear_term_factor=2.0,
               tol=DEFAULT_TOL, operator=None) -> FineField:
    """Minimizer of ``int A^eps grad u . grad u - lambda int f u`` over the discrete ``H^1_0``."""
    if grid.n != n:
        raise ValueError(f"grid was built for n={grid.n}, asked for n={n}")
    op = FineOperator(A, grid) if operator is None else operator
    rhs = 0.5 * linear_term_factor * op.load(f)
    x, it, res = solve_spd(op.matrix, rhs, tol=tol)
    return FineField.from_free(op.lattice, x, {"field": "u_min", "n": n, "m": grid.m,
                                               "iterations": it, "residual": res})


def _check_field(u: FineField, lattice):
    if (u.dim, u.P) != (lattice.dim, lattice.cells):
        raise ValueError(f"field on P={u.P} (N={u.dim}) does not match {lattice}")


def quadratic_energy(u: FineField, samples) -> float:
    """``int A grad u . grad u`` for element-constant ``A`` (exact for Q1 ``u``)."""
    lat = u.lattice
    if samples.shape[:-2] != lat.elem_shape:
        raise ValueError("coefficient samples do not match the field's lattice")
    g = lat.grads_at_quad(u.values)
    return lat.integrate(np.einsum("...qk,...kl,...ql->...q", g, samples, g))


def linear_term(u: FineField, f) -> float:
    lat = u.lattice
    return lat.integrate(f(lat.quad_points()) * lat.values_at_quad(u.values))


def energy_F(u: FineField, A: CoefficientField, n: int, f, *, m=None,
             linear_term_factor=2.0) -> float:
    """``F_eps(u) = int A(x/eps) grad u . grad u - lambda int f u``."""
    if u.P % n:
        raise ValueError(f"field resolution P={u.P} is not a multiple of n={n}")
    grid = FineGrid(u.dim, n, u.P // n if m is None else m)
    _check_field(u, grid.lattice)
    return quadratic_energy(u, fine_coefficient(A, grid)) - linear_term_factor * linear_term(u, f)


def _dirichlet_laplacian(lattice):
    return lattice.laplacian()[lattice.free][:, lattice.free].tocsr()


def h_minus1_norm(lattice, *, flux=None, density=None, functional=None, tol=DEFAULT_TOL):
    """Discrete ``H^-1`` norm ``sqrt(<w, z>)`` with ``-Laplace z = w`` on ``H^1_0``.

    ``w`` is given weakly: ``flux`` ``q`` at Gauss points (``<w, phi> = int q . grad phi``),
    a ``density`` ``s`` (``<w, phi> = int s phi``), or a nodal ``functional`` vector.
    """
    given = [v is not None for v in (flux, density, functional)]
    if sum(given) != 1:
        raise ValueError("pass exactly one of flux, density, functional")
    if flux is not None:
        r = lattice.load_flux(flux)
    elif density is not None:
        r = lattice.load_scalar(density)
    else:
        r = np.asarray(functional, dtype=float)
    r = r.ravel()
    if r.size == lattice.n_nodes:
        r = r[lattice.free]
    if not np.any(r):
        return 0.0
    z, _, _ = solve_spd(_dirichlet_laplacian(lattice), r, tol=tol)
    return float(np.sqrt(max(r @ z, 0.0)))


def expansion_residual_flux(u2: FineField, A: CoefficientField, n: int, A_hom, g,
                            *, m=None) -> np.ndarray:
    """``q = A^eps grad u2 - A_hom grad g`` at Gauss points of the fine lattice.

    ``u2`` is the nodal interpolant of the two-scale expansion and ``g`` enters
    through its nodal interpolant on the same lattice, so ``div q`` pairs
    exactly with the discrete operators.
    """
    grid = FineGrid(u2.dim, n, u2.P // n if m is None else m)
    lat = grid.lattice
    _check_field(u2, lat)
    A_hom = np.atleast_2d(np.asarray(A_hom, dtype=float))
    samples = fine_coefficient(A, grid)
    gu = lat.grads_at_quad(u2.values)
    G = FineField.interpolate(lat, g)
    gg = lat.grads_at_quad(G.values)
    return (np.einsum("...kl,...ql->...qk", samples, gu)
            - np.einsum("kl,...ql->...qk", A_hom, gg))


def l2_error(u: FineField, func=None) -> float:
    """``||u - func||_{L^2}`` with ``func`` evaluated at Gauss points (``func=None``: ``||u||``)."""
    lat = u.lattice
    vals = lat.values_at_quad(u.values)
    if func is not None:
        vals = vals - func(lat.quad_points())
    return float(np.sqrt(lat.integrate(vals**2)))


def h1_seminorm(u: FineField) -> float:
    lat = u.lattice
    g = lat.grads_at_quad(u.values)
    return float(np.sqrt(lat.integrate((g**2).sum(-1))))


def h1_norm(u: FineField) -> float:
    return float(np.hypot(l2_error(u), h1_seminorm(u)))


__all__ = ["FineGrid", "FineOperator", "fine_coefficient", "solve_fine",
           "energy_F", "quadratic_energy", "linear_term", "h_minus1_norm",
           "expansion_residual_flux", "l2_error", "h1_seminorm", "h1_norm"]
