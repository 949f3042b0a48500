"""Conforming triangulations of a rectangle with newest-vertex bisection.

Meshes are immutable: refining or coarsening returns a new ``Mesh``.  Every
element stores its newest vertex last, and the refinement edge is the edge
opposite that vertex.  Structured generation produces right isosceles
triangles with the newest vertex at the right angle; this class of triangles
is closed under newest-vertex bisection, so adaptive refinement never
degrades angles and the nonobtuse invariant (no angle beyond 90 degrees)
holds after any sequence of operations.

The whole bisection history is kept as a binary forest.  That makes
coarsening an exact inverse of refinement and lets point location descend
from the structured root grid instead of searching all leaves.
"""

from __future__ import annotations

import itertools
import math
from enum import IntEnum

import numpy as np

from tgfem.errors import MeshError

_mesh_versions = itertools.count(1)

# Tolerance for barycentric containment tests during point location.
_BARY_TOL = 1e-9


class Zone(IntEnum):
    """Refinement zones: interfacial band, tumour interior, exterior."""

    FINE = 0
    MEDIUM = 1
    COARSE = 2


class Mesh:
    """Immutable conforming triangulation with bisection history.

    Parameters are internal; build meshes with :func:`generate_square_mesh`
    or :meth:`Mesh.from_arrays` and derive new ones with :func:`bisect` and
    :func:`coarsen`.
    """

    def __init__(self, nodes, boundary, tri, parent, children, gen,
                 box=None, grid=None, lineage=None):
        self.nodes = np.ascontiguousarray(nodes, dtype=np.float64)
        self.boundary = np.ascontiguousarray(boundary, dtype=bool)
        self._tri = np.ascontiguousarray(tri, dtype=np.int32)
        self._parent = np.ascontiguousarray(parent, dtype=np.int32)
        self._children = np.ascontiguousarray(children, dtype=np.int32)
        self._gen = np.ascontiguousarray(gen, dtype=np.int32)
        self.box = box
        self._grid = grid  # (nx, ny) of the structured root layout, or None
        self.version = next(_mesh_versions)
        # Lineage of a derived mesh: ("bisect"|"coarsen", parent_version, payload).
        # Used for exact piecewise-linear field transfer without point location.
        self._lineage = lineage
        self.leaf_ids = np.flatnonzero(self._children[:, 0] < 0).astype(np.int32)
        self._cache = {}

    # -- basic queries ----------------------------------------------------

    @property
    def node_count(self):
        return self.nodes.shape[0]

    @property
    def element_count(self):
        return self.leaf_ids.shape[0]

    @property
    def elements(self):
        """Leaf elements as an (n, 3) node-index array, newest vertex last."""
        return self._tri[self.leaf_ids]

    def element_coords(self):
        """Vertex coordinates of the leaf elements, shape (n, 3, 2)."""
        return self.nodes[self.elements]

    def areas(self):
        """Signed areas of the leaf elements (positive for CCW triples)."""
        if "areas" not in self._cache:
            p = self.element_coords()
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    def diameters(self):
        """Longest edge of each leaf element."""
        if "diam" not in self._cache:
            p = self.element_coords()
            e0 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
            e1 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
            e2 = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
            self._cache["diam"] = np.maximum(e0, np.maximum(e1, e2))
        return self._cache["diam"]

    def edges(self):
        """Unique sorted edges of the leaf elements and their incidence counts."""
        t = self.elements
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0, return_counts=True)

    @classmethod
    def from_arrays(cls, nodes, triangles, boundary=None):
        """Wrap raw arrays as a single-generation mesh (mainly for tests).

        Triangles must be counterclockwise; the last vertex of each triple is
        taken as the newest vertex.
        """
        nodes = np.asarray(nodes, dtype=np.float64)
        tri = np.asarray(triangles, dtype=np.int32)
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise MeshError("triangles must be an (n, 3) index array")
        p = nodes[tri]
        area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                 - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
        if np.any(area2 <= 0.0):
            raise MeshError("all triangles must be counterclockwise with positive area")
        n_tri = tri.shape[0]
        if boundary is None:
            boundary = np.zeros(nodes.shape[0], dtype=bool)
        return cls(nodes, boundary, tri,
                   parent=np.full(n_tri, -1, dtype=np.int32),
                   children=np.full((n_tri, 2), -1, dtype=np.int32),
                   gen=np.zeros(n_tri, dtype=np.int32))

    # -- point location ---------------------------------------------------

    def _bary(self, fid, x, y):
        a, b, c = self._tri[fid]
        ax, ay = self.nodes[a]
        bx, by = self.nodes[b]
        cx, cy = self.nodes[c]
        det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        w1 = ((x - ax) * (cy - ay) - (y - ay) * (cx - ax)) / det
        w2 = ((bx - ax) * (y - ay) - (by - ay) * (x - ax)) / det
        return 1.0 - w1 - w2, w1, w2

    def _descend(self, fid, x, y):
        children = self._children
        while children[fid, 0] >= 0:
            c0, c1 = children[fid]
            w0 = self._bary(c0, x, y)
            if min(w0) >= -_BARY_TOL:
                fid = c0
                continue
            w1 = self._bary(c1, x, y)
            if min(w1) >= min(w0):
                fid = c1
            else:
                fid = c0
        return fid

    def _root_for(self, x, y):
        nx, ny = self._grid
        x0, y0, x1, y1 = self.box
        hx = (x1 - x0) / nx
        hy = (y1 - y0) / ny
        i = min(max(int((x - x0) / hx), 0), nx - 1)
        j = min(max(int((y - y0) / hy), 0), ny - 1)
        # Try the nominal cell first, then its neighbours (points that sit on
        # a cell line can land either side after floating-point division).
        for jj, ii in [(j, i)] + [(j + dj, i + di)
                                  for dj in (-1, 0, 1) for di in (-1, 0, 1)
                                  if (di, dj) != (0, 0)]:
            if not (0 <= ii < nx and 0 <= jj < ny):
                continue
            for k in (0, 1):
                fid = 2 * (jj * nx + ii) + k
                if min(self._bary(fid, x, y)) >= -_BARY_TOL:
                    return fid
        raise MeshError(f"point ({x}, {y}) is outside the mesh")

    def locate(self, point):
        """Return (leaf position, barycentric coords) of the element containing ``point``."""
        x, y = float(point[0]), float(point[1])
        if self._grid is not None:
            fid = self._root_for(x, y)
        else:
            fid = -1
            best = -np.inf
            for rid in np.flatnonzero(self._parent < 0):
                w = min(self._bary(rid, x, y))
                if w > best:
                    best = w
                    fid = int(rid)
            if best < -_BARY_TOL:
                raise MeshError(f"point ({x}, {y}) is outside the mesh")
        fid = self._descend(fid, x, y)
        if "leaf_pos" not in self._cache:
            pos = np.full(self._tri.shape[0], -1, dtype=np.int64)
            pos[self.leaf_ids] = np.arange(self.leaf_ids.shape[0])
            self._cache["leaf_pos"] = pos
        return int(self._cache["leaf_pos"][fid]), np.array(self._bary(fid, x, y))


def generate_square_mesh(box, n):
    """Uniform mesh of right isosceles triangles on an axis-aligned rectangle.

    ``n`` is the subdivision count along x; the subdivision along y is chosen
    so that cells are square, and non-square aspects are rejected because only
    square cells split into right isosceles triangles (which newest-vertex
    bisection then preserves).  Each cell is cut along its lower-left to
    upper-right diagonal; the two triangles have their newest vertex at the
    right angle, so paired refinement edges meet on the diagonal.
    """
    x0, y0, x1, y1 = (float(v) for v in box)
    if n < 1 or x1 <= x0 or y1 <= y0:
        raise MeshError("box must have positive extent and n >= 1")
    hx = (x1 - x0) / n
    ny = int(round((y1 - y0) / hx))
    if ny < 1 or abs((y1 - y0) / ny - hx) > 1e-12 * hx:
        raise MeshError("cells must be square: box aspect must be commensurate with n")
    nx = int(n)

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    boundary = ((X.ravel() == x0) | (X.ravel() == x1)
                | (Y.ravel() == y0) | (Y.ravel() == y1))

    def nid(i, j):
        return j * (nx + 1) + i

    tri = np.empty((2 * nx * ny, 3), dtype=np.int32)
    for j in range(ny):
        for i in range(nx):
            v00 = nid(i, j)
            v10 = nid(i + 1, j)
            v01 = nid(i, j + 1)
            v11 = nid(i + 1, j + 1)
            base = 2 * (j * nx + i)
            tri[base] = (v11, v00, v10)      # below the diagonal, peak at v10
            tri[base + 1] = (v00, v11, v01)  # above the diagonal, peak at v01

    n_tri = tri.shape[0]
    return Mesh(nodes, boundary, tri,
                parent=np.full(n_tri, -1, dtype=np.int32),
                children=np.full((n_tri, 2), -1, dtype=np.int32),
                gen=np.zeros(n_tri, dtype=np.int32),
                box=(x0, y0, x1, y1), grid=(nx, ny))


def bisect(mesh, marked):
    """Bisect the marked leaf elements through their newest vertices.

    Compatibility bisections are added recursively so the result is
    conforming.  Returns the input mesh unchanged if nothing is marked.
    """
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.element_count:
        raise MeshError("marked element index out of range")

    nodes = [tuple(p) for p in mesh.nodes]
    bnd = list(mesh.boundary)
    tri = [list(t) for t in mesh._tri]
    parent = list(mesh._parent)
    children = [list(c) for c in mesh._children]
    gen = list(mesh._gen)

    # Edge -> incident leaf forest ids (1 on the boundary, 2 inside).
    edge2leaf = {}
    for fid in mesh.leaf_ids:
        a, b, c = tri[fid]
        for e in ((a, b), (b, c), (c, a)):
            key = (e[0], e[1]) if e[0] < e[1] else (e[1], e[0])
            edge2leaf.setdefault(key, []).append(int(fid))

    n_old_nodes = len(nodes)
    midpoints = []  # (new node id, endpoint a, endpoint b)

    def do_bisect(fids, key):
        """Bisect the 1 or 2 elements whose refinement edge is ``key``."""
        a, b = key
        mid = len(nodes)
        nodes.append(((nodes[a][0] + nodes[b][0]) / 2.0,
                      (nodes[a][1] + nodes[b][1]) / 2.0))
        bnd.append(len(fids) == 1)
        midpoints.append((mid, a, b))
        for fid in fids:
            v0, v1, v2 = tri[fid]
            left = len(tri)
            tri.append([v2, v0, mid])
            right = left + 1
            tri.append([v1, v2, mid])
            for _ in range(2):
                parent.append(fid)
                children.append([-1, -1])
                gen.append(gen[fid] + 1)
            children[fid] = [left, right]
            for e in ((v0, v1), (v1, v2), (v2, v0)):
                k = (e[0], e[1]) if e[0] < e[1] else (e[1], e[0])
                edge2leaf[k].remove(fid)
            for cid, ce in ((left, ((v2, v0), (v0, mid), (mid, v2))),
                            (right, ((v1, v2), (v2, mid), (mid, v1)))):
                for e in ce:
                    k = (e[0], e[1]) if e[0] < e[1] else (e[1], e[0])
                    edge2leaf.setdefault(k, []).append(cid)

    def refine(fid0):
        stack = [fid0]
        guard = 0
        while stack:
            guard += 1
            if guard > 100 * len(tri):
                raise MeshError("bisection closure did not terminate")
            fid = stack[-1]
            if children[fid][0] >= 0:  # already bisected along the way
                stack.pop()
                continue
            v0, v1 = tri[fid][0], tri[fid][1]
            key = (v0, v1) if v0 < v1 else (v1, v0)
            incident = edge2leaf[key]
            nb = next((t for t in incident if t != fid), None)
            if nb is not None:
                n0, n1 = tri[nb][0], tri[nb][1]
                nb_key = (n0, n1) if n0 < n1 else (n1, n0)
                if nb_key != key:
                    stack.append(nb)
                    continue
                do_bisect((fid, nb), key)
            else:
                do_bisect((fid,), key)
            stack.pop()

    for pos in marked:
        refine(int(mesh.leaf_ids[pos]))

    lineage = ("bisect", mesh.version, (n_old_nodes, midpoints))
    return Mesh(np.array(nodes), np.array(bnd), np.array(tri, dtype=np.int32),
                np.array(parent, dtype=np.int32), np.array(children, dtype=np.int32),
                np.array(gen, dtype=np.int32),
                box=mesh.box, grid=mesh._grid, lineage=lineage)


def coarsen(mesh, marked):
    """Merge sibling pairs whose children are all marked leaves.

    A merge removes the midpoint node its pair shares, so it is only applied
    when every leaf touching that node belongs to a marked sibling pair; other
    marks are ignored.  The initial (root) elements are never coarsened.
    Returns the input mesh unchanged when no merge applies.
    """
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.element_count:
        raise MeshError("marked element index out of range")

    tri = mesh._tri
    parent = mesh._parent
    children = mesh._children
    marked_fids = set(int(f) for f in mesh.leaf_ids[marked])

    # Sibling pairs with both children marked, grouped by their midpoint node.
    pairs_by_mid = {}
    seen_parents = set()
    for fid in sorted(marked_fids):
        p = int(parent[fid])
        if p < 0 or p in seen_parents:
            continue
        c0, c1 = int(children[p, 0]), int(children[p, 1])
        if c0 in marked_fids and c1 in marked_fids:
            seen_parents.add(p)
            mid = int(tri[c0, 2])  # newest vertex, shared by both children
            pairs_by_mid.setdefault(mid, []).append(p)

    if not pairs_by_mid:
        return mesh

    # Leaves touching each candidate midpoint node.
    mids = set(pairs_by_mid)
    touching = {m: set() for m in mids}
    for fid in mesh.leaf_ids:
        for v in tri[fid]:
            if int(v) in mids:
                touching[int(v)].add(int(fid))

    removed_elems = set()
    removed_nodes = set()
    new_leaf_parents = []
    for mid in sorted(mids):
        members = set()
        for p in pairs_by_mid[mid]:
            members.add(int(children[p, 0]))
            members.add(int(children[p, 1]))
        if touching[mid] != members:
            continue  # something else still hangs on this node
        removed_nodes.add(mid)
        removed_elems.update(members)
        new_leaf_parents.extend(pairs_by_mid[mid])

    if not removed_nodes:
        return mesh

    keep_elem = np.ones(tri.shape[0], dtype=bool)
    keep_elem[sorted(removed_elems)] = False
    elem_map = np.cumsum(keep_elem) - 1

    keep_node = np.ones(mesh.node_count, dtype=bool)
    keep_node[sorted(removed_nodes)] = False
    node_map = np.cumsum(keep_node) - 1

    new_tri = node_map[tri[keep_elem]].astype(np.int32)
    new_parent = parent[keep_elem].copy()
    ok = new_parent >= 0
    new_parent[ok] = elem_map[new_parent[ok]].astype(np.int32)
    new_children = children[keep_elem].copy()
    for p in new_leaf_parents:
        new_children[elem_map[p]] = (-1, -1)
    ok = new_children >= 0
    new_children[ok] = elem_map[new_children[ok]].astype(np.int32)

    kept_nodes = np.flatnonzero(keep_node)
    lineage = ("coarsen", mesh.version, kept_nodes)
    return Mesh(mesh.nodes[keep_node], mesh.boundary[keep_node], new_tri,
                new_parent, new_children, mesh._gen[keep_elem],
                box=mesh.box, grid=mesh._grid, lineage=lineage)


def classify_zones(mesh, phi, cutoff=0.99):
    """Zone label per leaf element from the nodal phase values.

    Fine: all vertex values satisfy |phi| < cutoff.  Medium: phi is exactly 1
    at all vertices.  Coarse: exactly -1 at all vertices.  Anything mixed is
    treated as Fine, which errs towards refinement.
    """
    vals = np.asarray(getattr(phi, "values", phi), dtype=np.float64)
    v = vals[mesh.elements]
    fine = (np.abs(v) < cutoff).all(axis=1)
    medium = (v == 1.0).all(axis=1)
    coarse = (v == -1.0).all(axis=1)
    out = np.full(mesh.element_count, Zone.FINE, dtype=np.int8)
    out[medium] = Zone.MEDIUM
    out[coarse] = Zone.COARSE
    out[fine] = Zone.FINE
    return out


def check_nonobtuse(mesh, tol=1e-12):
    """True iff no interior angle exceeds 90 degrees (plus ``tol`` radians).

    Also returns the worst angle found, in degrees.
    """
    p = mesh.element_coords()
    worst = 0.0
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        cosang = np.einsum("ij,ij->i", a, b) / (
            np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        worst = max(worst, float(ang.max()) if ang.size else 0.0)
    return worst <= math.pi / 2.0 + tol, math.degrees(worst)


def evaluate_values(mesh, values, points):
    """Piecewise-linear evaluation of nodal ``values`` at arbitrary points.

    Barycentric weights are used as-is but the result is clamped to the range
    of the three vertex values, so evaluation can never escape the nodal
    bounds (floating-point round-off would otherwise leak past them).
    """
    values = np.asarray(getattr(values, "values", values), dtype=np.float64)
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    out = np.empty(pts.shape[0])
    tri = mesh.elements
    for k, p in enumerate(pts):
        pos, w = mesh.locate(p)
        v = values[tri[pos]]
        out[k] = min(max(float(w @ v), float(v.min())), float(v.max()))
    return out


def interpolate_values(old_mesh, values, new_mesh):
    """Transfer nodal values from ``old_mesh`` onto ``new_mesh``.

    If ``new_mesh`` was derived from ``old_mesh`` by a single bisect/coarsen
    call the exact lineage transfer is used (survivors copy their value, a
    bisection midpoint averages its edge endpoints); otherwise every new node
    is located in the old mesh and evaluated there.  Both paths realise the
    same piecewise-linear interpolant and both preserve nodal bounds.
    """
    values = np.asarray(getattr(values, "values", values), dtype=np.float64)
    if values.shape[0] != old_mesh.node_count:
        raise MeshError("field length does not match the source mesh")
    lin = new_mesh._lineage
    if lin is not None and lin[1] == old_mesh.version:
        return apply_lineage(new_mesh, values)
    return evaluate_values(old_mesh, values, new_mesh.nodes)


def apply_lineage(new_mesh, values):
    """Transfer values across the single bisect/coarsen step that made ``new_mesh``."""
    kind, _, payload = new_mesh._lineage
    if kind == "bisect":
        n_old, midpoints = payload
        out = np.empty(new_mesh.node_count)
        out[:n_old] = values
        for mid, a, b in midpoints:
            out[mid] = 0.5 * (out[a] + out[b])
        return out
    kept = payload
    return values[kept].copy()
