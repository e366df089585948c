"""Simplicial meshes of the interval, square, L-shape and polygonal disk.

Meshes are immutable value objects. Uniform refinement (bisection in 1D, red
refinement in 2D) keeps every coarse vertex verbatim so the P1 spaces are nested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Mesh",
    "ShapeReport",
    "PairClass",
    "interval_mesh",
    "square_mesh",
    "lshape_mesh",
    "disk_mesh",
    "build_mesh",
    "refine_uniform",
    "refine_times",
    "shape_regularity",
    "classify_pair",
    "prolongation",
    "write_mesh",
    "read_mesh",
    "DOMAINS",
]

DOMAINS = ("interval", "square", "lshape", "disk")


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming simplicial mesh.

    Attributes
    ----------
    dim : int
        1 or 2.
    vertices : (nv, dim) float array
    elements : (ne, dim + 1) int array, counter-clockwise in 2D
    parent : Mesh or None
        The mesh this one refines.
    parent_edges : (nv - nv_parent, 2) int array or None
        Parent vertex pair whose midpoint created each new vertex.
    domain : str
        Free-form tag ("interval", "square", ...), informational only.
    """

    dim: int
    vertices: np.ndarray
    elements: np.ndarray
    parent: "Mesh | None" = field(default=None, repr=False)
    parent_edges: np.ndarray | None = field(default=None, repr=False)
    domain: str = "custom"

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        e = np.ascontiguousarray(self.elements, dtype=np.int64)
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if v.ndim != 2 or v.shape[1] != self.dim:
            raise ValueError(f"vertices must have shape (nv, {self.dim})")
        if e.ndim != 2 or e.shape[1] != self.dim + 1 or len(e) == 0:
            raise ValueError(f"elements must have shape (ne, {self.dim + 1}) with ne >= 1")
        if e.min() < 0 or e.max() >= len(v):
            raise ValueError("element references a non-existent vertex")
        v.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "elements", e)
        bad = np.flatnonzero(self.measures <= 0)
        if bad.size:
            raise ValueError(f"element {int(bad[0])} is degenerate or clockwise")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def measures(self) -> np.ndarray:
        p = self.vertices[self.elements]
        if self.dim == 1:
            return p[:, 1, 0] - p[:, 0, 0]
        a = p[:, 1] - p[:, 0]
        b = p[:, 2] - p[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.elements]
        if self.dim == 1:
            return p[:, 1, 0] - p[:, 0, 0]
        d = [np.linalg.norm(p[:, i] - p[:, j], axis=1) for i, j in ((0, 1), (1, 2), (0, 2))]
        return np.max(d, axis=0)

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def boundary_facets(self) -> np.ndarray:
        """(nf, dim) vertex indices of facets lying on one element only.

        In 2D each facet is ordered so that the domain lies on its left.
        """
        e = self.elements
        if self.dim == 1:
            counts = np.bincount(e.ravel(), minlength=self.n_vertices)
            return np.flatnonzero(counts == 1).reshape(-1, 1)
        facets = np.concatenate([e[:, [0, 1]], e[:, [1, 2]], e[:, [2, 0]]])
        key = np.sort(facets, axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        return facets[counts[inv.ravel()] == 1]

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_facets.ravel()] = True
        mask.setflags(write=False)
        return mask

    @cached_property
    def interior_dofs(self) -> np.ndarray:
        idx = np.flatnonzero(~self.boundary_mask)
        idx.setflags(write=False)
        return idx

    @property
    def n_dofs(self) -> int:
        return len(self.interior_dofs)

    @cached_property
    def dof_of_vertex(self) -> np.ndarray:
        """Row index of each vertex, -1 for constrained (boundary) vertices."""
        m = np.full(self.n_vertices, -1, dtype=np.int64)
        m[self.interior_dofs] = np.arange(self.n_dofs)
        m.setflags(write=False)
        return m

    @cached_property
    def boundary_segments(self) -> np.ndarray:
        """Straight sides of the polygonal boundary, (ns, 2, 2) start/end points.

        Consecutive collinear boundary facets are merged. The domain lies to the left.
        Unused in 1D.
        """
        if self.dim == 1:
            raise ValueError("boundary segments are defined for 2D meshes only")
        return _merge_collinear(self.vertices, self.boundary_facets)

    @property
    def area(self) -> float:
        return float(self.measures.sum())


def _merge_collinear(vertices: np.ndarray, facets: np.ndarray) -> np.ndarray:
    nxt = {int(a): int(b) for a, b in facets}
    remaining = set(nxt)
    segments = []
    while remaining:
        start = min(remaining)
        loop = [start]
        remaining.discard(start)
        v = nxt[start]
        while v != start:
            loop.append(v)
            remaining.discard(v)
            v = nxt[v]
        pts = vertices[loop]
        m = len(loop)
        corner = []
        for i in range(m):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % m]
            u, w = b - a, c - b
            cross = u[0] * w[1] - u[1] * w[0]
            if abs(cross) > 1e-12 * np.linalg.norm(u) * np.linalg.norm(w):
                corner.append(i)
        for j in range(len(corner)):
            segments.append((pts[corner[j]], pts[corner[(j + 1) % len(corner)]]))
    return np.array(segments, dtype=np.float64).reshape(-1, 2, 2)


@dataclass(frozen=True)
class ShapeReport:
    sigma: float
    worst_element: int


@dataclass(frozen=True)
class PairClass:
    tag: str
    shared_vertices: tuple[tuple[int, int], ...]

    TAGS = ("identical", "vertex_touching", "edge_touching", "disjoint")


def interval_mesh(a: float, b: float, n_cells: int) -> Mesh:
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    if not a < b:
        raise ValueError("need a < b")
    x = a + (b - a) * np.arange(n_cells + 1) / n_cells
    x[-1] = b
    el = np.stack([np.arange(n_cells), np.arange(1, n_cells + 1)], axis=1)
    return Mesh(1, x.reshape(-1, 1), el, domain="interval")


def _grid_cells(x0, y0, n, h, quadrant_sign, index):
    """Triangles of an n x n block of square cells starting at (x0, y0).

    The diagonal of every cell runs along the direction given by quadrant_sign:
    +1 joins lower-left to upper-right, -1 joins upper-left to lower-right.
    """
    tris = []
    for j in range(n):
        for i in range(n):
            ll = index(x0 + i * h, y0 + j * h)
            lr = index(x0 + (i + 1) * h, y0 + j * h)
            ul = index(x0 + i * h, y0 + (j + 1) * h)
            ur = index(x0 + (i + 1) * h, y0 + (j + 1) * h)
            if quadrant_sign > 0:
                tris += [(ll, lr, ur), (ll, ur, ul)]
            else:
                tris += [(ll, lr, ul), (lr, ur, ul)]
    return tris


def square_mesh(half_width: float, n_per_side: int) -> Mesh:
    """Structured triangulation of [-w, w]^2 with one diagonal per cell.

    Diagonals in each quadrant point towards that quadrant's corner, so all four
    corners are split symmetrically (union-jack pattern).
    """
    if n_per_side < 1:
        raise ValueError("n_per_side must be >= 1")
    w = float(half_width)
    n = int(n_per_side)
    h = 2 * w / n
    table = {}
    coords = []

    def index(i, j):
        if (i, j) not in table:
            table[(i, j)] = len(coords)
            coords.append((-w + i * h if i < n else w, -w + j * h if j < n else w))
        return table[(i, j)]

    tris = []
    for j in range(n):
        for i in range(n):
            cx, cy = 2 * i + 1 - n, 2 * j + 1 - n
            sign = -1 if cx * cy < 0 else 1
            tris += _grid_cells(i, j, 1, 1, sign, index)
    return Mesh(2, np.array(coords, dtype=np.float64), np.array(tris), domain="square")


def lshape_mesh(n_per_side: int) -> Mesh:
    """[-1,1]^2 minus [0,1]^2 with n_per_side cells per unit side (6 n^2 triangles)."""
    if n_per_side < 1:
        raise ValueError("n_per_side must be >= 1")
    n = int(n_per_side)
    h = 1.0 / n
    table = {}
    coords = []

    def index(i, j):
        # lattice indices relative to the origin
        if (i, j) not in table:
            table[(i, j)] = len(coords)
            coords.append((i * h if abs(i) < n else float(np.sign(i)), j * h if abs(j) < n else float(np.sign(j))))
        return table[(i, j)]

    tris = []
    for bx, by in ((-1, -1), (0, -1), (-1, 0)):
        sign = 1 if bx == by else -1
        tris += _grid_cells(bx * n, by * n, n, 1, sign, index)
    return Mesh(2, np.array(coords, dtype=np.float64), np.array(tris), domain="lshape")


def disk_mesh(n_boundary: int) -> Mesh:
    """Triangulation of the regular n_boundary-gon inscribed in the unit circle.

    Concentric rings j = 1..m at radius j/m carry round(n j / m) vertices with
    m = round(n / 6); neighbouring rings are zipped by angle.
    """
    if n_boundary < 3:
        raise ValueError("n_boundary must be >= 3")
    n = int(n_boundary)
    if n == 3:
        ang = 2 * np.pi * np.arange(3) / 3
        return Mesh(2, np.stack([np.cos(ang), np.sin(ang)], axis=1), np.array([[0, 1, 2]]), domain="disk")
    m = max(1, int(round(n / 6)))
    coords = [(0.0, 0.0)]
    rings = [[0]]
    ring_angles = [np.array([0.0])]
    for j in range(1, m + 1):
        cnt = n if j == m else max(3, int(round(n * j / m)))
        ang = 2 * np.pi * np.arange(cnt) / cnt
        r = 1.0 if j == m else j / m
        ids = list(range(len(coords), len(coords) + cnt))
        coords += [(r * math.cos(t), r * math.sin(t)) for t in ang]
        rings.append(ids)
        ring_angles.append(ang)
    tris = []
    for j in range(1, m + 1):
        outer, ao = rings[j], ring_angles[j]
        inner, ai = rings[j - 1], ring_angles[j - 1]
        if len(inner) == 1:
            for k in range(len(outer)):
                tris.append((inner[0], outer[k], outer[(k + 1) % len(outer)]))
            continue
        tris += _zip_rings(inner, ai, outer, ao)
    return Mesh(2, np.array(coords, dtype=np.float64), np.array(tris), domain="disk")


def _zip_rings(inner, ai, outer, ao):
    ni, no = len(inner), len(outer)
    i = k = 0
    tris = []
    two_pi = 2 * np.pi
    while i < ni or k < no:
        next_i = ai[i + 1] if i + 1 < ni else two_pi
        next_o = ao[k + 1] if k + 1 < no else two_pi
        if k < no and (i >= ni or next_o <= next_i):
            tris.append((inner[i % ni], outer[k], outer[(k + 1) % no]))
            k += 1
        else:
            tris.append((inner[i], outer[k % no], inner[(i + 1) % ni]))
            i += 1
    return tris


def build_mesh(domain: str, resolution: int) -> Mesh:
    """Coarse mesh for a named domain.

    resolution means: cells on (-1,1) (interval), cells per side of [-1,1]^2
    (square), cells per unit side (lshape), polygon vertices (disk).
    """
    if domain == "interval":
        return interval_mesh(-1.0, 1.0, resolution)
    if domain == "square":
        return square_mesh(1.0, resolution)
    if domain == "lshape":
        return lshape_mesh(resolution)
    if domain == "disk":
        return disk_mesh(resolution)
    raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}")


def refine_uniform(mesh: Mesh) -> Mesh:
    v, e = mesh.vertices, mesh.elements
    nv = len(v)
    if mesh.dim == 1:
        mid = 0.5 * (v[e[:, 0]] + v[e[:, 1]])
        new = nv + np.arange(len(e))
        children = np.empty((2 * len(e), 2), dtype=np.int64)
        children[0::2] = np.stack([e[:, 0], new], axis=1)
        children[1::2] = np.stack([new, e[:, 1]], axis=1)
        return Mesh(1, np.concatenate([v, mid]), children, parent=mesh,
                    parent_edges=e.copy(), domain=mesh.domain)
    edges = np.concatenate([e[:, [0, 1]], e[:, [1, 2]], e[:, [2, 0]]])
    key = np.sort(edges, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    ne = len(e)
    m01, m12, m20 = (nv + inv[:ne], nv + inv[ne:2 * ne], nv + inv[2 * ne:])
    mid = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
    children = np.empty((4 * ne, 3), dtype=np.int64)
    children[0::4] = np.stack([e[:, 0], m01, m20], axis=1)
    children[1::4] = np.stack([e[:, 1], m12, m01], axis=1)
    children[2::4] = np.stack([e[:, 2], m20, m12], axis=1)
    children[3::4] = np.stack([m01, m12, m20], axis=1)
    return Mesh(2, np.concatenate([v, mid]), children, parent=mesh,
                parent_edges=uniq, domain=mesh.domain)


def refine_times(mesh: Mesh, times: int) -> Mesh:
    for _ in range(times):
        mesh = refine_uniform(mesh)
    return mesh


def prolongation(coarse: Mesh, fine: Mesh) -> sp.csr_matrix:
    """Interpolation matrix mapping vertex values on `coarse` to vertex values on `fine`.

    `fine` must be obtained from `coarse` by repeated uniform refinement.
    """
    chain = []
    m = fine
    while m is not coarse:
        if m is None:
            raise ValueError("fine mesh is not a refinement of coarse mesh")
        chain.append(m)
        m = m.parent
    P = sp.identity(coarse.n_vertices, format="csr")
    for m in reversed(chain):
        nc = m.parent.n_vertices
        ne = len(m.parent_edges)
        rows = np.concatenate([np.arange(nc), nc + np.repeat(np.arange(ne), 2)])
        cols = np.concatenate([np.arange(nc), m.parent_edges.ravel()])
        vals = np.concatenate([np.ones(nc), np.full(2 * ne, 0.5)])
        step = sp.csr_matrix((vals, (rows, cols)), shape=(nc + ne, nc))
        P = step @ P
    return P.tocsr()


def shape_regularity(mesh: Mesh) -> ShapeReport:
    if mesh.dim == 1:
        return ShapeReport(2.0, 0)
    p = mesh.vertices[mesh.elements]
    lens = np.stack([np.linalg.norm(p[:, i] - p[:, j], axis=1) for i, j in ((0, 1), (1, 2), (0, 2))], axis=1)
    rho = 2 * mesh.measures / lens.sum(axis=1)
    ratio = lens.max(axis=1) / rho
    k = int(np.argmax(ratio))
    return ShapeReport(float(ratio[k]), k)


def classify_pair(mesh: Mesh, t1: int, t2: int) -> PairClass:
    a, b = mesh.elements[t1], mesh.elements[t2]
    shared = tuple((i, j) for i in range(len(a)) for j in range(len(b)) if a[i] == b[j])
    if t1 == t2:
        return PairClass("identical", shared)
    tag = {0: "disjoint", 1: "vertex_touching", 2: "edge_touching"}[len(shared)]
    return PairClass(tag, shared)


def write_mesh(mesh: Mesh, path: str | Path) -> None:
    lines = [f"{mesh.dim} {mesh.n_vertices} {mesh.n_elements}"]
    lines += [" ".join(repr(float(c)) for c in row) for row in mesh.vertices]
    lines += [" ".join(str(int(i)) for i in row) for row in mesh.elements]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path: str | Path) -> Mesh:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        dim, nv, ne = (int(x) for x in rows[0])
        verts = np.array([[float(x) for x in r] for r in rows[1:1 + nv]], dtype=np.float64)
        els = np.array([[int(x) for x in r] for r in rows[1 + nv:1 + nv + ne]], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed mesh file {path}: {exc}") from exc
    if len(verts) != nv or len(els) != ne or len(rows) != 1 + nv + ne:
        raise ValueError(f"malformed mesh file {path}: counts do not match header")
    return Mesh(dim, verts.reshape(nv, dim), els.reshape(ne, dim + 1), domain="custom")
