"""P1 element quantities: coefficients, lumped masses, stiffness matrices.

All mass terms use the nodal-quadrature (lumped) inner product
``(u, v)_h = sum_j m_j u_j v_j`` with ``m_j`` the row sums of the exact P1
mass matrix; gradient terms use exact integration of the piecewise-constant
gradients.  The mobility weight in the weighted stiffness matrix is
integrated exactly as well, since the weight composed with a P1 field is
again piecewise linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from tgfem.errors import MeshError
from tgfem.mesh import Mesh, interpolate_values

#: Interface energy constant of the double-obstacle potential.
C_W = math.pi / 4.0


def zeta(s):
    """Mobility: vanishes at the pure exterior phase, 1 at the pure interior."""
    return 0.5 * (1.0 + np.asarray(s, dtype=np.float64))


def delta(s):
    """Interface weight: nonnegative on [-1, 1], vanishing at both pure phases."""
    s = np.asarray(s, dtype=np.float64)
    return (2.0 / math.pi) * (1.0 - s * s)


@dataclass
class NodalField:
    """One scalar per mesh node, tagged with the mesh it was built on."""

    values: np.ndarray
    mesh: Mesh

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.mesh.node_count,):
            raise MeshError("field length does not match the mesh node count")

    def copy(self):
        return NodalField(self.values.copy(), self.mesh)


def interpolate_field(old_field: NodalField, new_mesh: Mesh) -> NodalField:
    """Piecewise-linear transfer of a field onto a derived mesh."""
    return NodalField(interpolate_values(old_field.mesh, old_field.values, new_mesh),
                      new_mesh)


class _FemCache:
    """Per-mesh assembly data: geometry factors, sparsity pattern, slot map.

    The sparsity pattern is fixed by the mesh, so reassembling a weighted
    stiffness matrix only rewrites the CSR value array through ``slots``.
    """

    def __init__(self, mesh):
        tri = mesh.elements.astype(np.int64)
        p = mesh.nodes[tri]
        x = p[:, :, 0]
        y = p[:, :, 1]
        nxt = [1, 2, 0]
        prv = [2, 0, 1]
        b = y[:, nxt] - y[:, prv]
        c = x[:, prv] - x[:, nxt]
        area2 = x[:, 0] * b[:, 0] + x[:, 1] * b[:, 1] + x[:, 2] * b[:, 2]
        if np.any(area2 <= 0.0):
            raise MeshError("mesh has a non-CCW or degenerate element")
        self.areas = 0.5 * area2
        # |sigma| * grad(chi_i) . grad(chi_j) for each element
        self.glocal = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) \
            / (4.0 * self.areas)[:, None, None]
        self.tri = tri

        n = mesh.node_count
        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()
        pattern = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()
        pattern.sum_duplicates()
        pattern.sort_indices()
        self.indptr = pattern.indptr.astype(np.int32)
        self.indices = pattern.indices.astype(np.int32)
        self.nnz = self.indices.size

        nnz_rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(pattern.indptr))
        flat = nnz_rows * n + self.indices
        self.slots = np.searchsorted(flat, rows * n + cols)
        self.diag_slots = np.searchsorted(flat, np.arange(n, dtype=np.int64) * (n + 1))

        self.lumped = np.bincount(tri.ravel(),
                                  weights=np.repeat(self.areas / 3.0, 3),
                                  minlength=n)

    def csr_from_element_values(self, vals):
        data = np.bincount(self.slots, weights=vals.ravel(), minlength=self.nnz)
        n = self.lumped.shape[0]
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(n, n))


def fem_cache(mesh) -> _FemCache:
    if "fem" not in mesh._cache:
        mesh._cache["fem"] = _FemCache(mesh)
    return mesh._cache["fem"]


def lumped_mass(mesh):
    """Diagonal of the lumped mass matrix: m_j = sum of |sigma|/3 over elements at j."""
    return fem_cache(mesh).lumped


def discrete_inner(u: NodalField, v: NodalField, m=None):
    """Nodal-quadrature inner product (u, v)_h on a shared mesh."""
    if u.mesh.version != v.mesh.version:
        raise MeshError("fields live on different mesh versions")
    if m is None:
        m = lumped_mass(u.mesh)
    return float(np.dot(m * u.values, v.values))


def assemble_stiffness(mesh):
    """Unweighted P1 stiffness matrix (CSR, symmetric positive semidefinite)."""
    if "K" not in mesh._cache:
        cache = fem_cache(mesh)
        mesh._cache["K"] = cache.csr_from_element_values(cache.glocal)
    return mesh._cache["K"]


def assemble_weighted_stiffness(mesh, phi):
    """Stiffness matrix weighted by the mobility of the phase field.

    The weight integral over an element is the element area times the vertex
    average of the mobility, which is exact because the mobility is affine.
    """
    cache = fem_cache(mesh)
    vals = np.asarray(getattr(phi, "values", phi), dtype=np.float64)
    w = zeta(vals[cache.tri]).mean(axis=1)
    return cache.csr_from_element_values(cache.glocal * w[:, None, None])


def weighted_lumped_mass(mesh, phi, g):
    """Lumped mass with a nodal coefficient: entry_j = m_j * g(phi_j)."""
    vals = np.asarray(getattr(phi, "values", phi), dtype=np.float64)
    return lumped_mass(mesh) * g(vals)
