"""Preconditioned conjugate gradients, optionally on the mean-zero subspace."""

from __future__ import annotations

import logging
import threading

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAXITER = 100_000
AMG_SEED = 20240601
_AMG_LOCK = threading.Lock()
BACKWARD_ERROR_TOL = 64 * np.finfo(float).eps


class SolverError(RuntimeError):
    """Raised when CG fails to reach the requested residual."""

    def __init__(self, message, iterations, residual):
        super().__init__(f"{message} (iterations={iterations}, relative residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


def amg_preconditioner(matrix, singular=False):
    """Smoothed-aggregation AMG V-cycle as a callable ``r -> z``.

    Periodic stiffness matrices are singular on constants; the hierarchy is
    built on a slightly shifted copy so the coarse solve stays well posed.
    """
    import pyamg

    A = sp.csr_matrix(matrix)
    if singular:
        shift = 1e-8 * float(A.diagonal().mean())
        A = A + shift * sp.identity(A.shape[0], format="csr")
    # pyamg draws power-iteration start vectors from the global numpy RNG
    with _AMG_LOCK:
        state = np.random.get_state()
        np.random.seed(AMG_SEED)
        try:
            ml = pyamg.smoothed_aggregation_solver(A, max_coarse=64)
        finally:
            np.random.set_state(state)

    def apply(r):
        return ml.solve(r, x0=np.zeros_like(r), tol=1e-30, maxiter=1, cycle="V")

    return apply


def _norm2_bound(A):
    """Upper bound ``sqrt(|A|_1 |A|_inf)`` for the spectral norm of a sparse matrix."""
    a = abs(A)
    return float(np.sqrt(a.sum(axis=0).max() * a.sum(axis=1).max()))


def pcg(A, b, *, precond=None, tol=DEFAULT_TOL, maxiter=DEFAULT_MAXITER,
        mean_zero=False, x0=None):
    """Solve ``A x = b`` for symmetric positive (semi)definite ``A``.

    With ``mean_zero`` the iteration runs on the complement of the constants:
    ``b`` and every search direction are projected, and the returned ``x`` has
    zero arithmetic mean.  Convergence is declared on the true residual
    ``|b - A x| <= tol |b|``, or on a normwise backward error at rounding level
    when ``tol`` lies below the attainable accuracy of the system.  Returns
    ``(x, iterations, relative_residual)``.
    """
    b = np.asarray(b, dtype=float).ravel()
    if mean_zero:
        b = b - b.mean()
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float).ravel()
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0

    def project(v):
        return v - v.mean() if mean_zero else v

    def M(r):
        return project(precond(r)) if precond is not None else r

    iterations = 0
    rel = np.inf
    # restarts guard against drift between the recursive and true residuals
    for _ in range(20):
        r = project(b - A @ x)
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            break
        z = M(r)
        p = z.copy()
        rz = r @ z
        while iterations < maxiter:
            Ap = A @ p
            if mean_zero:
                Ap = project(Ap)
            pAp = p @ Ap
            if pAp <= 0.0:
                break
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            iterations += 1
            if np.linalg.norm(r) <= 0.1 * tol * bnorm:
                break
            z = M(r)
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        if iterations >= maxiter:
            break
    if mean_zero:
        x -= x.mean()
    rnorm = np.linalg.norm(project(b - A @ x))
    rel = rnorm / bnorm
    if rel > tol and rnorm > BACKWARD_ERROR_TOL * (_norm2_bound(A) * np.linalg.norm(x) + bnorm):
        raise SolverError("conjugate gradients did not converge", iterations, rel)
    log.debug("pcg converged: %d iterations, residual %.2e", iterations, rel)
    return x, iterations, rel


def solve_spd(A, b, *, tol=DEFAULT_TOL, maxiter=DEFAULT_MAXITER, mean_zero=False,
              use_amg=True):
    """PCG with an AMG preconditioner for anything bigger than a toy system."""
    precond = None
    if use_amg and A.shape[0] > 256:
        precond = amg_preconditioner(A, singular=mean_zero)
    return pcg(A, b, precond=precond, tol=tol, maxiter=maxiter, mean_zero=mean_zero)
