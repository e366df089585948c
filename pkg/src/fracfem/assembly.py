"""Stiffness and mass matrices of the P1 Galerkin discretization.

The stiffness form is

    <u, v> = C(n,s) [ int_O int_O (u(x)-u(y))(v(x)-v(y)) |x-y|^(-n-2s) dy dx
                      + 2 int_O u(x) v(x) w(x) dx ],   w(x) = int_{R^n \\ O} |x-y|^(-n-2s) dy,

for u, v vanishing outside the polygonal domain O. The double integral is split
into element pairs; every pair contributes sum_q w_q k(x_q - y_q) D_q D_q^T with
D_a = phi_a(x) - phi_a(y), so each local matrix is positive semidefinite and
annihilates constants regardless of quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numba as nb
import numpy as np
import scipy.sparse as sp

from .kernel import check_order, normalization_constant
from .mesh import Mesh
from .quadrature import (
    gauss_jacobi01,
    gauss_legendre01,
    gauss_simplex,
    interval_exterior_weight,
    polygon_exterior_weight,
    singular_pair_rule,
)

__all__ = [
    "QuadratureConfig",
    "DofMap",
    "assemble_stiffness",
    "assemble_mass",
    "interaction_matrix",
    "exterior_matrix",
    "export_matrix",
]


def _default_schedule(dim):
    # (upper bound on distance/diameter, Gauss degree, subdivision levels), calibrated
    # against the adaptive reference for ~1e-8 (2D) and ~1e-12 (1D) relative pair error
    if dim == 1:
        return ((0.5, 31, 1), (1.5, 21, 0), (3.0, 17, 0), (6.0, 13, 0), (12.0, 11, 0),
                (24.0, 9, 0), (80.0, 7, 0), (math.inf, 5, 0))
    return ((0.25, 21, 1), (0.5, 21, 0), (1.0, 15, 0), (2.0, 11, 0), (4.0, 9, 0),
            (16.0, 7, 0), (math.inf, 5, 0))


@dataclass(frozen=True)
class QuadratureConfig:
    """Quadrature settings for stiffness assembly.

    touching_order : degree of the 1D factor rules in the Duffy-type pair rules
    identical_order : same, for the angular factor of identical pairs
    disjoint_schedule : ((ratio_max, degree, levels), ...) selecting the tensor rule
        for a disjoint pair by distance / max diameter; `levels` uniform subdivisions
    exterior_degree : Gauss degree for the exterior term away from the boundary
    exterior_radial_points : Gauss-Jacobi points toward a boundary side
    """

    touching_order: int = 12
    identical_order: int = 24
    disjoint_schedule: tuple | None = None
    exterior_degree: int = 11
    exterior_radial_points: int = 10

    def schedule(self, dim: int) -> tuple:
        return tuple(tuple(x) for x in (self.disjoint_schedule or _default_schedule(dim)))

    @classmethod
    def for_dim(cls, dim: int, **kw) -> "QuadratureConfig":
        if dim == 1:
            kw.setdefault("touching_order", 24)
            kw.setdefault("identical_order", 24)
            kw.setdefault("exterior_degree", 39)
            kw.setdefault("exterior_radial_points", 20)
        return cls(**kw)


@dataclass(frozen=True)
class DofMap:
    """Vertex to row map; constrained vertices map to -1."""

    row_of_vertex: np.ndarray
    order: int

    @classmethod
    def from_mesh(cls, mesh: Mesh) -> "DofMap":
        return cls(mesh.dof_of_vertex, mesh.n_dofs)


# --------------------------------------------------------------------------- rule tables


def _composite(dim, degree, levels):
    """Gauss rule of `degree` on each of the 2^(dim*levels) children of the reference simplex."""
    base = gauss_simplex(dim, degree)
    pts, w = base.points, base.weights
    if dim == 1:
        simp = [np.array([[0.0], [1.0]])]
    else:
        simp = [np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])]
    for _ in range(levels):
        nxt = []
        for P in simp:
            if dim == 1:
                m = 0.5 * (P[0] + P[1])
                nxt += [np.array([P[0], m]), np.array([m, P[1]])]
            else:
                a, b, c = 0.5 * (P[0] + P[1]), 0.5 * (P[1] + P[2]), 0.5 * (P[2] + P[0])
                nxt += [np.array([P[0], a, c]), np.array([P[1], b, a]), np.array([P[2], c, b]), np.array([a, b, c])]
        simp = nxt
    allp, allw = [], []
    for P in simp:
        lam = np.column_stack([1 - pts.sum(axis=1), pts])
        allp.append(lam @ P)
        allw.append(w / len(simp))
    p = np.concatenate(allp)
    return np.column_stack([1 - p.sum(axis=1), p]), np.concatenate(allw)


def _rule_table(dim, schedule):
    bary, wts, off, thr = [], [], [0], []
    for rmax, degree, levels in schedule:
        b, w = _composite(dim, int(degree), int(levels))
        bary.append(b)
        wts.append(w)
        off.append(off[-1] + len(w))
        thr.append(rmax)
    return (np.ascontiguousarray(np.concatenate(bary)), np.concatenate(wts),
            np.array(off, dtype=np.int64), np.array(thr, dtype=np.float64))


def _pair_rule_arrays(tag, s, order, dim, identical_order=None):
    if tag == "identical" and dim == 2:
        # the hat-difference integrand depends on x - y only, so the overlap
        # (beta) factor is integrated exactly by its centroid
        r = _identical_rule_2d(s, identical_order or order)
    else:
        r = singular_pair_rule(tag, s, identical_order if tag == "identical" and identical_order else order, dim=dim)
        r = (r.points_x, r.points_y, r.weights)
    px, py, w = r
    bx = np.column_stack([1 - px.sum(axis=1), px])
    by = np.column_stack([1 - py.sum(axis=1), py])
    return np.ascontiguousarray(bx), np.ascontiguousarray(by), np.ascontiguousarray(w)


def _identical_rule_2d(s, order):
    from .quadrature import _identical_2d, _n_points

    return _identical_2d(s, _n_points(order), 1, 2)


# --------------------------------------------------------------------------- numba kernels


@nb.njit(cache=True)
def _kernel(r2, e):
    return r2 ** e


@nb.njit(cache=True)
def _pt_seg_dist2(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    t = ((px - ax) * dx + (py - ay) * dy) / L2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    qx, qy = ax + t * dx - px, ay + t * dy - py
    return qx * qx + qy * qy


@nb.njit(cache=True)
def _element_distance(V, E, i, j, dim):
    if dim == 1:
        a0, a1 = V[E[i, 0], 0], V[E[i, 1], 0]
        b0, b1 = V[E[j, 0], 0], V[E[j, 1], 0]
        return max(b0 - a1, a0 - b1, 0.0)
    best = 1e300
    for ti, tj in ((i, j), (j, i)):
        for a in range(3):
            px, py = V[E[ti, a], 0], V[E[ti, a], 1]
            for b in range(3):
                c = (b + 1) % 3
                d2 = _pt_seg_dist2(px, py, V[E[tj, b], 0], V[E[tj, b], 1], V[E[tj, c], 0], V[E[tj, c], 1])
                if d2 < best:
                    best = d2
    return math.sqrt(best)


@nb.njit(cache=True)
def _scatter(A, dof, ids, L, nU, fac):
    for a in range(nU):
        ra = dof[ids[a]]
        if ra < 0:
            continue
        for b in range(nU):
            rb = dof[ids[b]]
            if rb >= 0:
                A[ra, rb] += fac * L[a, b]


@nb.njit(cache=True)
def _disjoint_pair(V, E, dof, A, i, j, dim, ex, absdet, bary, wts, lo, hi, L, ids, xq, yq, wx, wy, tmp, kx, ky):
    nv = dim + 1
    nq = hi - lo
    for q in range(nq):
        for d in range(dim):
            sx = 0.0
            sy = 0.0
            for k in range(nv):
                sx += bary[lo + q, k] * V[E[i, k], d]
                sy += bary[lo + q, k] * V[E[j, k], d]
            xq[q, d] = sx
            yq[q, d] = sy
        wx[q] = wts[lo + q] * absdet[i]
        wy[q] = wts[lo + q] * absdet[j]
        kx[q] = 0.0
        ky[q] = 0.0
    for a in range(2 * nv):
        for b in range(2 * nv):
            L[a, b] = 0.0
    for p in range(nq):
        for b in range(nv):
            tmp[b] = 0.0
        for q in range(nq):
            r2 = 0.0
            for d in range(dim):
                t = xq[p, d] - yq[q, d]
                r2 += t * t
            kv = wx[p] * wy[q] * r2**ex
            kx[p] += kv
            ky[q] += kv
            for b in range(nv):
                tmp[b] += kv * bary[lo + q, b]
        for a in range(nv):
            pa = bary[lo + p, a]
            for b in range(nv):
                L[a, nv + b] -= pa * tmp[b]
    for q in range(nq):
        for a in range(nv):
            for b in range(nv):
                L[a, b] += kx[q] * bary[lo + q, a] * bary[lo + q, b]
                L[nv + a, nv + b] += ky[q] * bary[lo + q, a] * bary[lo + q, b]
    for a in range(nv):
        for b in range(nv):
            L[nv + b, a] = L[a, nv + b]
        ids[a] = E[i, a]
        ids[nv + a] = E[j, a]
    _scatter(A, dof, ids, L, 2 * nv, 2.0)


@nb.njit(cache=True)
def _touching_pair(V, E, dof, A, i, j, dim, ex, absdet, p1, p2, nsh, bx, by, w, L, ids, D, fac):
    nv = dim + 1
    nU = 2 * nv - nsh
    for a in range(nU):
        for b in range(nU):
            L[a, b] = 0.0
    scale = absdet[i] * absdet[j]
    for q in range(len(w)):
        r2 = 0.0
        for d in range(dim):
            sx = 0.0
            for k in range(nv):
                sx += (bx[q, k] * V[E[i, p1[k]], d]) - (by[q, k] * V[E[j, p2[k]], d])
            r2 += sx * sx
        kv = w[q] * scale * r2**ex
        for k in range(nv):
            D[k] = bx[q, k]
        for k in range(nv, nU):
            D[k] = 0.0
        for k in range(nv):
            if k < nsh:
                D[k] -= by[q, k]
            else:
                D[nv + k - nsh] = -by[q, k]
        for a in range(nU):
            ka = kv * D[a]
            for b in range(a, nU):
                L[a, b] += ka * D[b]
    for a in range(nU):
        for b in range(a + 1, nU):
            L[b, a] = L[a, b]
    for k in range(nv):
        ids[k] = E[i, p1[k]]
    for k in range(nsh, nv):
        ids[nv + k - nsh] = E[j, p2[k]]
    _scatter(A, dof, ids, L, nU, fac)


@nb.njit(cache=True)
def _pair_loop(V, E, dof, dim, s, diam, absdet, bary, wts, off, thr,
               id_bx, id_by, id_w, vt_bx, vt_by, vt_w, ed_bx, ed_by, ed_w):
    ne = E.shape[0]
    nv = dim + 1
    n = 0
    for v in range(dof.shape[0]):
        if dof[v] >= 0:
            n += 1
    A = np.zeros((n, n))
    ex = -(dim + 2.0 * s) / 2.0
    active = np.zeros(ne, dtype=np.bool_)
    for t in range(ne):
        for k in range(nv):
            if dof[E[t, k]] >= 0:
                active[t] = True
    maxq = 0
    for r in range(len(off) - 1):
        maxq = max(maxq, off[r + 1] - off[r])
    xq = np.empty((maxq, dim))
    yq = np.empty((maxq, dim))
    wx = np.empty(maxq)
    wy = np.empty(maxq)
    kx = np.empty(maxq)
    ky = np.empty(maxq)
    tmp = np.empty(nv)
    L = np.empty((2 * nv, 2 * nv))
    ids = np.empty(2 * nv, dtype=np.int64)
    D = np.empty(2 * nv)
    p1 = np.empty(nv, dtype=np.int64)
    p2 = np.empty(nv, dtype=np.int64)
    si = np.empty(nv, dtype=np.int64)
    sj = np.empty(nv, dtype=np.int64)
    for i in range(ne):
        for j in range(i, ne):
            if not (active[i] or active[j]):
                continue
            if i == j:
                for k in range(nv):
                    p1[k] = k
                    p2[k] = k
                _touching_pair(V, E, dof, A, i, j, dim, ex, absdet, p1, p2, nv, id_bx, id_by, id_w, L, ids, D, 1.0)
                continue
            nsh = 0
            for a in range(nv):
                for b in range(nv):
                    if E[i, a] == E[j, b]:
                        si[nsh] = a
                        sj[nsh] = b
                        nsh += 1
            if nsh == 0:
                dist = _element_distance(V, E, i, j, dim)
                ratio = dist / max(diam[i], diam[j])
                r = 0
                while r < len(thr) - 1 and ratio >= thr[r]:
                    r += 1
                _disjoint_pair(V, E, dof, A, i, j, dim, ex, absdet, bary, wts, off[r], off[r + 1],
                               L, ids, xq, yq, wx, wy, tmp, kx, ky)
                continue
            # shared vertices first, in matching order
            for k in range(nsh):
                p1[k] = si[k]
                p2[k] = sj[k]
            c1 = nsh
            c2 = nsh
            for a in range(nv):
                u1 = True
                u2 = True
                for k in range(nsh):
                    if si[k] == a:
                        u1 = False
                    if sj[k] == a:
                        u2 = False
                if u1:
                    p1[c1] = a
                    c1 += 1
                if u2:
                    p2[c2] = a
                    c2 += 1
            if nsh == 1:
                _touching_pair(V, E, dof, A, i, j, dim, ex, absdet, p1, p2, 1, vt_bx, vt_by, vt_w, L, ids, D, 2.0)
            else:
                _touching_pair(V, E, dof, A, i, j, dim, ex, absdet, p1, p2, 2, ed_bx, ed_by, ed_w, L, ids, D, 2.0)
    return A


def interaction_matrix(mesh: Mesh, s: float, quad: QuadratureConfig | None = None) -> np.ndarray:
    """Unscaled Omega x Omega part of the stiffness matrix on the interior DOFs."""
    s = check_order(s)
    dim = mesh.dim
    quad = quad or QuadratureConfig.for_dim(dim)
    bary, wts, off, thr = _rule_table(dim, quad.schedule(dim))
    idr = _pair_rule_arrays("identical", s, quad.touching_order, dim, quad.identical_order)
    vtr = _pair_rule_arrays("vertex_touching", s, quad.touching_order, dim)
    if dim == 2:
        edr = _pair_rule_arrays("edge_touching", s, quad.touching_order, dim)
    else:
        edr = (np.zeros((1, 2)), np.zeros((1, 2)), np.zeros(1))
    absdet = mesh.measures * math.factorial(dim)
    return _pair_loop(mesh.vertices, mesh.elements, np.asarray(mesh.dof_of_vertex), dim, s,
                      np.asarray(mesh.diameters), np.ascontiguousarray(absdet), bary, wts, off, thr,
                      *idr, *vtr, *edr)


# --------------------------------------------------------------------------- exterior term


def _local_mass_weighted(lam, vals, weights, local):
    """sum_q weights * vals * lam_a lam_b for a, b in `local`."""
    f = weights * vals
    return np.array([[np.sum(f * lam[:, a] * lam[:, b]) for b in local] for a in local])


def _exterior_1d(mesh, s, quad):
    V, E, dof = mesh.vertices[:, 0], mesh.elements, mesh.dof_of_vertex
    lo, hi = V.min(), V.max()
    n = mesh.n_dofs
    W = np.zeros((n, n))
    xg, wg = gauss_legendre01(quad.exterior_degree // 2 + 1)
    tj, wj = gauss_jacobi01(quad.exterior_radial_points, 2 - 2 * s)
    for t in range(len(E)):
        a, b = V[E[t, 0]], V[E[t, 1]]
        h = b - a
        rows = dof[E[t]]
        keep = np.flatnonzero(rows >= 0)
        if keep.size == 0:
            continue
        lam = np.column_stack([1 - xg, xg])
        x = a + h * xg
        if a == lo or b == hi:
            # boundary element: the single interior hat vanishes at the boundary end,
            # int phi^2 (x - lo)^(-2s) = h^(1-2s) int t^(2-2s)
            k = keep[0]
            near, far = (lo, hi) if a == lo else (hi, lo)
            loc = h ** (1 - 2 * s) * np.sum(wj) / (2 * s)
            xs = a + h * xg
            other = np.abs(far - xs) ** (-2 * s) / (2 * s)
            loc += h * np.sum(wg * other * lam[:, k] ** 2)
            W[rows[k], rows[k]] += loc
            continue
        w = interval_exterior_weight(x, lo, hi, s)
        loc = _local_mass_weighted(lam, w, h * wg, keep)
        W[np.ix_(rows[keep], rows[keep])] += loc
    return W


def _seg_point_dist(p, A, B):
    d = B - A
    t = np.clip(((p - A) @ d) / (d @ d), 0.0, 1.0)
    return np.linalg.norm(A + t[..., None] * d - p, axis=-1)


def _on_segment(p, A, B, tol):
    d = B - A
    L = np.linalg.norm(d)
    cross = abs(d[0] * (p[1] - A[1]) - d[1] * (p[0] - A[0])) / L
    t = ((p - A) @ d) / (L * L)
    return cross <= tol and -tol <= t * L <= L + tol


def _exterior_2d(mesh, s, quad):
    V, E, dof = mesh.vertices, mesh.elements, mesh.dof_of_vertex
    segs = mesh.boundary_segments
    n = mesh.n_dofs
    W = np.zeros((n, n))
    g, wg = gauss_legendre01(quad.exterior_degree // 2 + 1)
    xi_v, wxi_v = gauss_jacobi01(quad.exterior_radial_points, 1 - 2 * s)
    u_f, wu_f = gauss_jacobi01(quad.exterior_radial_points, 2 - 2 * s)
    tol = 1e-12 * mesh.h_max
    schedule = ((0.25, 21, 1), (0.5, 21, 0), (1.0, 15, 0), (2.0, 11, 0), (math.inf, quad.exterior_degree, 0))
    rules = [_composite(2, d, lv) for _, d, lv in schedule]
    for t in range(len(E)):
        ids = E[t]
        rows = dof[ids]
        keep = np.flatnonzero(rows >= 0)
        if keep.size == 0:
            continue
        T = V[ids]
        area2 = 2 * mesh.measures[t]
        diam = mesh.diameters[t]
        loc = np.zeros((len(keep), len(keep)))
        for A, B in segs:
            seg = np.array([[A, B]])
            on = [k for k in range(3) if _on_segment(T[k], A, B, tol)]
            if len(on) >= 2:
                # facet on this side: collapse toward the opposite vertex p,
                # x = p + u((1-v) b1 + v b2 - p); only p can carry a DOF
                p = 3 - on[0] - on[1]
                if rows[p] < 0:
                    continue
                M, Vv = np.meshgrid(u_f, g, indexing="ij")  # M = 1 - u
                lam = np.zeros(M.shape + (3,))
                lam[..., p] = M
                lam[..., on[0]] = (1 - M) * (1 - Vv)
                lam[..., on[1]] = (1 - M) * Vv
                x = lam.reshape(-1, 3) @ T
                wv = polygon_exterior_weight(x, seg, s).reshape(M.shape)
                # phi_p^2 = M^2 and the M^(-2s) of the weight are carried by the Jacobi rule
                f = np.outer(wu_f, wg) * (1 - M) * area2 * wv * M ** (2 * s)
                kp = int(np.flatnonzero(keep == p)[0])
                loc[kp, kp] += np.sum(f)
            elif len(on) == 1:
                b = on[0]
                o1, o2 = [k for k in range(3) if k != b]
                X, Vv = np.meshgrid(xi_v, g, indexing="ij")
                lam = np.zeros(X.shape + (3,))
                lam[..., b] = 1 - X
                lam[..., o1] = X * (1 - Vv)
                lam[..., o2] = X * Vv
                lam = lam.reshape(-1, 3)
                x = lam @ T
                wv = polygon_exterior_weight(x, seg, s)
                # Jacobian xi area2 over the Jacobi weight xi^(1-2s) leaves xi^(2s)
                Xf = X.ravel()
                f = np.outer(wxi_v, wg).ravel() * Xf ** (2 * s) * area2 * wv
                loc += _local_mass_weighted(lam, 1.0, f, keep)
            else:
                d = float(np.min(_seg_point_dist(T, A, B)))
                d = min(d, float(np.min([_seg_point_dist(np.array([P]), T[k], T[(k + 1) % 3])[0]
                                          for P in (A, B) for k in range(3)])))
                r = 0
                while r < len(schedule) - 1 and d / diam >= schedule[r][0]:
                    r += 1
                lam, wq = rules[r]
                x = lam @ T
                wv = polygon_exterior_weight(x, seg, s)
                loc += _local_mass_weighted(lam, wv, wq * area2, keep)
        W[np.ix_(rows[keep], rows[keep])] += loc
    return W


def exterior_matrix(mesh: Mesh, s: float, quad: QuadratureConfig | None = None) -> np.ndarray:
    """Unscaled int u v w dx on the interior DOFs."""
    s = check_order(s)
    quad = quad or QuadratureConfig.for_dim(mesh.dim)
    if mesh.dim == 1:
        return _exterior_1d(mesh, s, quad)
    return _exterior_2d(mesh, s, quad)


def _symmetrize_lower(A):
    low = np.tril(A)
    return low + np.tril(A, -1).T


def assemble_stiffness(mesh: Mesh, s: float, quad: QuadratureConfig | None = None) -> np.ndarray:
    """Dense stiffness matrix K[i, j] = <phi_i, phi_j> over the interior DOFs.

    Symmetric bit for bit: the lower triangle is authoritative and mirrored.
    """
    s = check_order(s)
    if mesh.n_dofs == 0:
        raise ValueError("mesh has no interior degrees of freedom")
    quad = quad or QuadratureConfig.for_dim(mesh.dim)
    A = interaction_matrix(mesh, s, quad)
    A += 2.0 * exterior_matrix(mesh, s, quad)
    A *= normalization_constant(mesh.dim, s).value
    return _symmetrize_lower(A)


def assemble_mass(mesh: Mesh, full: bool = False) -> sp.csr_matrix:
    """Exact P1 mass matrix on the interior DOFs (or on all vertices with full=True)."""
    E = mesh.elements
    nv = mesh.dim + 1
    if mesh.dim == 1:
        ref = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    else:
        ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    vals = mesh.measures[:, None, None] * ref[None]
    rows = np.repeat(E, nv, axis=1).ravel()
    cols = np.tile(E, (1, nv)).ravel()
    M = sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(mesh.n_vertices, mesh.n_vertices)).tocsr()
    M.sum_duplicates()
    if full:
        return M
    idx = mesh.interior_dofs
    if idx.size == 0:
        raise ValueError("mesh has no interior degrees of freedom")
    Mi = M[idx][:, idx].tocsr()
    # mirror the lower triangle for bit-exact symmetry
    low = sp.tril(Mi)
    return (low + sp.tril(Mi, -1).T).tocsr()


def export_matrix(matrix, path: str | Path) -> None:
    """Write the lower triangle as 'row col value' lines (0-based, 17 significant digits)."""
    A = sp.coo_matrix(sp.tril(sp.csr_matrix(matrix)))
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for k in order:
            fh.write(f"{A.row[k]} {A.col[k]} {A.data[k]:.17g}\n")
