"""Multilinear (Q1) finite elements on uniform tensor lattices over the unit cube.

A :class:`Lattice` is either periodic (the cell ``Y = [0, 1)^N`` with nodes
``0..M-1`` per axis) or Dirichlet (``Omega = (0, 1)^N`` with nodes ``0..P``
per axis).  Element data are arrays of shape ``elem_shape + (...)``; nodal
data are arrays of shape ``node_shape``.  Everything is vectorized over the
element index, so assembly costs a handful of numpy passes per local node
pair rather than a Python loop over elements.
"""

from __future__ import annotations

import itertools
from functools import cached_property

import numpy as np
import scipy.sparse as sp

_GAUSS_1D = np.polynomial.legendre.leggauss(3)


def _reference_rule(dim):
    """3-point tensor Gauss rule on [0, 1]^dim with Q1 shape data."""
    x1, w1 = _GAUSS_1D
    x1 = 0.5 * (x1 + 1.0)
    w1 = 0.5 * w1
    pts = np.array(list(itertools.product(x1, repeat=dim)))
    wts = np.array([np.prod(w) for w in itertools.product(w1, repeat=dim)])
    offsets = np.array(list(itertools.product((0, 1), repeat=dim)))
    # phi_a(t) = prod_k (t_k if o_k else 1 - t_k)
    fac = np.where(offsets[None, :, :] == 1, pts[:, None, :], 1.0 - pts[:, None, :])
    vals = fac.prod(axis=2)
    grads = np.empty(vals.shape + (dim,))
    for k in range(dim):
        dfac = fac.copy()
        dfac[:, :, k] = np.where(offsets[None, :, k] == 1, 1.0, -1.0)
        grads[:, :, k] = dfac.prod(axis=2)
    return pts, wts, offsets, vals, grads


class Lattice:
    """Uniform Q1 lattice with ``cells`` elements per axis on the unit cube."""

    def __init__(self, dim, cells, periodic):
        if dim not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {dim}")
        if cells < 1:
            raise ValueError("need at least one element per axis")
        self.dim = int(dim)
        self.cells = int(cells)
        self.periodic = bool(periodic)
        self.h = 1.0 / self.cells
        self.elem_shape = (self.cells,) * self.dim
        npa = self.cells if self.periodic else self.cells + 1
        self.node_shape = (npa,) * self.dim
        self.n_nodes = npa**self.dim
        (self.ref_points, self.ref_weights, self.offsets,
         self.shape_values, self.ref_shape_grads) = _reference_rule(self.dim)
        self.n_local = len(self.offsets)
        self.n_quad = len(self.ref_weights)
        self.jacobian = self.h**self.dim

    def __repr__(self):
        kind = "periodic" if self.periodic else "dirichlet"
        return f"Lattice(dim={self.dim}, cells={self.cells}, {kind})"

    def same_as(self, other):
        return (self.dim, self.cells, self.periodic) == (other.dim, other.cells, other.periodic)

    # -- geometry -----------------------------------------------------------

    def node_coords(self):
        ax = np.arange(self.node_shape[0]) * self.h
        mesh = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def element_midpoints(self):
        ax = (np.arange(self.cells) + 0.5) * self.h
        mesh = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def quad_points(self):
        """Physical Gauss points, shape ``elem_shape + (Q, N)``."""
        ax = np.arange(self.cells) * self.h
        corner = np.stack(np.meshgrid(*([ax] * self.dim), indexing="ij"), axis=-1)
        return corner[..., None, :] + self.h * self.ref_points

    @cached_property
    def boundary_mask(self):
        mask = np.zeros(self.node_shape, dtype=bool)
        if not self.periodic:
            for k in range(self.dim):
                idx = [slice(None)] * self.dim
                idx[k] = 0
                mask[tuple(idx)] = True
                idx[k] = -1
                mask[tuple(idx)] = True
        return mask

    @cached_property
    def free(self):
        """Flat indices of unknown nodes (all nodes when periodic)."""
        return np.flatnonzero(~self.boundary_mask.ravel())

    # -- element <-> node transfer -----------------------------------------

    def _local_slice(self, o):
        return tuple(slice(int(ok), int(ok) + self.cells) for ok in o)

    def gather(self, u):
        """Nodal values per element, shape ``elem_shape + (2^N,)``."""
        u = np.asarray(u).reshape(self.node_shape)
        out = np.empty(self.elem_shape + (self.n_local,), dtype=u.dtype)
        for a, o in enumerate(self.offsets):
            if self.periodic:
                out[..., a] = np.roll(u, shift=tuple(-o), axis=tuple(range(self.dim)))
            else:
                out[..., a] = u[self._local_slice(o)]
        return out

    def scatter(self, v):
        """Sum element-local contributions ``elem_shape + (2^N,)`` onto nodes."""
        out = np.zeros(self.node_shape, dtype=np.result_type(v, float))
        for a, o in enumerate(self.offsets):
            if self.periodic:
                out += np.roll(v[..., a], shift=tuple(o), axis=tuple(range(self.dim)))
            else:
                out[self._local_slice(o)] += v[..., a]
        return out

    # -- quadrature ----------------------------------------------------------

    def values_at_quad(self, u):
        return self.gather(u) @ self.shape_values.T

    def grads_at_quad(self, u):
        loc = self.gather(u)
        return np.einsum("...a,qak->...qk", loc, self.ref_shape_grads) / self.h

    def integrate(self, vals):
        """Integral of data sampled at Gauss points (``... , Q``) over the domain."""
        return float(np.tensordot(vals, self.ref_weights, axes=([-1], [0])).sum() * self.jacobian)

    def element_integrals(self, vals):
        return np.tensordot(vals, self.ref_weights, axes=([-1], [0])) * self.jacobian

    def load_scalar(self, s):
        """Nodal vector ``int s phi_a`` for ``s`` sampled at Gauss points."""
        w = s * self.ref_weights
        return self.scatter(w @ self.shape_values) * self.jacobian

    def load_flux(self, q):
        """Nodal vector ``int q . grad phi_a`` for ``q`` at Gauss points (``..., Q, N``)."""
        w = q * self.ref_weights[:, None]
        loc = np.einsum("...qk,qak->...a", w, self.ref_shape_grads)
        return self.scatter(loc) * self.jacobian / self.h

    # -- matrices ------------------------------------------------------------

    @cached_property
    def _ref_stiffness(self):
        """``G[k, l, a, b] = int_e d_k phi_a d_l phi_b`` for the physical element."""
        g = self.ref_shape_grads
        return np.einsum("q,qak,qbl->klab", self.ref_weights, g, g) * self.h ** (self.dim - 2)

    @cached_property
    def _ref_mass(self):
        v = self.shape_values
        return np.einsum("q,qa,qb->ab", self.ref_weights, v, v) * self.jacobian

    def _assemble(self, local):
        """Assemble from a callable ``local(a, b) -> elem_shape`` array."""
        rows, cols, data = [], [], []
        flat = np.arange(self.n_nodes).reshape(self.node_shape)
        n1 = self.node_shape[0]
        stencil = {}
        for a, oa in enumerate(self.offsets):
            for b, ob in enumerate(self.offsets):
                kab = local(a, b)
                d = tuple(int(x) for x in ob - oa)
                if self.periodic:
                    placed = np.roll(kab, shift=tuple(oa), axis=tuple(range(self.dim)))
                else:
                    placed = np.zeros(self.node_shape)
                    placed[self._local_slice(oa)] = kab
                if d in stencil:
                    stencil[d] += placed
                else:
                    stencil[d] = placed
        for d, coeff in stencil.items():
            if self.periodic:
                col = np.roll(flat, shift=tuple(-x for x in d), axis=tuple(range(self.dim)))
                rows.append(flat.ravel())
                cols.append(col.ravel())
                data.append(coeff.ravel())
            else:
                idx = np.indices(self.node_shape)
                tgt = [idx[k] + d[k] for k in range(self.dim)]
                ok = np.ones(self.node_shape, dtype=bool)
                for t in tgt:
                    ok &= (t >= 0) & (t < n1)
                col = np.zeros(self.node_shape, dtype=np.int64)
                for k in range(self.dim):
                    col = col * n1 + np.clip(tgt[k], 0, n1 - 1)
                rows.append(flat[ok])
                cols.append(col[ok])
                data.append(coeff[ok])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.concatenate(data)
        mat = sp.csr_matrix((data, (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        mat.sum_duplicates()
        return mat

    def stiffness(self, coeff):
        """Stiffness for element-constant tensors ``coeff`` (``elem_shape + (N, N)``)."""
        coeff = np.asarray(coeff, dtype=float)
        if coeff.shape != self.elem_shape + (self.dim, self.dim):
            raise ValueError(f"coefficient shape {coeff.shape} does not match {self}")
        G = self._ref_stiffness

        def local(a, b):
            return np.einsum("...kl,kl->...", coeff, G[:, :, a, b])

        return self._assemble(local)

    def laplacian(self):
        eye = np.broadcast_to(np.eye(self.dim), self.elem_shape + (self.dim, self.dim))
        return self.stiffness(eye)

    def mass(self):
        Mref = self._ref_mass
        ones = np.ones(self.elem_shape)
        return self._assemble(lambda a, b: ones * Mref[a, b])
