"""Reference values for stiffness entries, computed independently of production assembly.

Touching element pairs are resolved through exact self-similarity: refining both
elements of a pair produces child pairs that are scaled copies of the parent
pair (whose local matrix is 2^(2s-n) times the parent's, in corresponding hat
bases) plus pairs of a strictly simpler class. This gives a small linear system
for the parent's local matrix with no singular quadrature at all. Disjoint pairs
use tensor Gauss rules with adaptive subdivision. The exterior term uses
tanh-sinh quadrature in collapsed element coordinates. Intended for tests;
expensive compared to production assembly.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate

from .kernel import check_order, normalization_constant
from .mesh import Mesh
from .quadrature import gauss_simplex, interval_exterior_weight, polygon_exterior_weight

__all__ = [
    "OracleError",
    "pair_matrix",
    "exterior_element_matrix",
    "oracle_stiffness",
    "stiffness_entry_oracle",
    "ray_cast_exterior_weight",
]


class OracleError(RuntimeError):
    pass


# --------------------------------------------------------------------------- geometry helpers


def _children(P):
    """Uniform refinement of a simplex given by its vertex coordinates."""
    if len(P) == 2:
        m = 0.5 * (P[0] + P[1])
        return [np.array([P[0], m]), np.array([m, P[1]])]
    m01, m12, m20 = 0.5 * (P[0] + P[1]), 0.5 * (P[1] + P[2]), 0.5 * (P[2] + P[0])
    return [np.array([P[0], m01, m20]), np.array([P[1], m12, m01]),
            np.array([P[2], m20, m12]), np.array([m01, m12, m20])]


def _bary(P, x):
    """Barycentric coordinates of points x (N, d) in simplex P (d+1, d)."""
    B = (P[1:] - P[0]).T
    lam = np.linalg.solve(B, (x - P[0]).T).T
    return np.column_stack([1 - lam.sum(axis=1), lam])


def _measure(P):
    B = (P[1:] - P[0]).T
    return abs(np.linalg.det(B)) / math.factorial(len(P) - 1)


def _union(P, Q, tol=1e-13):
    """Union vertex list [P vertices, Q-only vertices] and Q's indices into it."""
    scale = max(np.ptp(np.vstack([P, Q]), axis=0).max(), 1e-300)
    U = [p for p in P]
    qidx = []
    for q in Q:
        hit = [i for i, p in enumerate(P) if np.max(np.abs(p - q)) <= tol * scale]
        if hit:
            qidx.append(hit[0])
        else:
            qidx.append(len(U))
            U.append(q)
    return np.array(U), np.array(qidx)


def _union_function_values(P, Q, qidx, pts):
    """Values of the union hat functions of (P, Q) at points in P or Q: (npts, nU)."""
    nU = len(P) + int(np.sum(qidx >= len(P)))
    out = np.zeros((len(pts), nU))
    lp = _bary(P, pts)
    inP = lp.min(axis=1) >= -1e-12
    out[inP, :len(P)] = lp[inP]
    if np.any(~inP):
        lq = _bary(Q, pts[~inP])
        if lq.min() < -1e-12:
            raise OracleError("point lies outside both elements")
        rows = np.flatnonzero(~inP)
        for k, u in enumerate(qidx):
            out[rows, u] = lq[:, k]
    return out


# --------------------------------------------------------------------------- disjoint pairs


def _tensor_pair(P, Q, qidx, s, order):
    dim = P.shape[1]
    rule = gauss_simplex(dim, order)
    bp = np.column_stack([1 - rule.points.sum(axis=1), rule.points])
    x = bp @ P
    y = bp @ Q
    wx = rule.weights * _measure(P) * math.factorial(dim)
    wy = rule.weights * _measure(Q) * math.factorial(dim)
    r2 = np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=-1)
    k = r2 ** (-(dim + 2 * s) / 2) * np.outer(wx, wy)
    nU = len(P) + int(np.sum(qidx >= len(P)))
    Fx = np.zeros((len(x), nU))
    Fx[:, :len(P)] = bp
    Fy = np.zeros((len(y), nU))
    Fy[:, qidx] = bp
    # sum_pq k_pq (Fx_p - Fy_q)(Fx_p - Fy_q)^T
    kx = k.sum(axis=1)
    ky = k.sum(axis=0)
    cross = Fx.T @ k @ Fy
    return (Fx.T * kx) @ Fx + (Fy.T * ky) @ Fy - cross - cross.T


def _disjoint(P, Q, s, rtol):
    U, qidx = _union(P, Q)
    if len(U) != len(P) + len(Q):
        raise OracleError("elements are not disjoint")
    hi = _tensor_pair(P, Q, qidx, s, 38)
    return _disjoint_adaptive(P, Q, qidx, s, rtol * np.max(np.abs(hi)), hi, 0)


def _disjoint_adaptive(P, Q, qidx, s, atol, hi, depth):
    lo = _tensor_pair(P, Q, qidx, s, 26)
    if np.max(np.abs(hi - lo)) <= atol:
        return hi
    if depth > 12:
        raise OracleError("adaptive subdivision of a disjoint pair did not converge")
    total = np.zeros_like(hi)
    cq = np.arange(len(P), 2 * len(P))
    for Pc in _children(P):
        for Qc in _children(Q):
            R = _union_function_values(P, Q, qidx, np.vstack([Pc, Qc]))
            child = _tensor_pair(Pc, Qc, cq, s, 38)
            total += R.T @ _disjoint_adaptive(Pc, Qc, cq, s, atol / 4, child, depth + 1) @ R
    return total


# --------------------------------------------------------------------------- touching pairs


def _homotheties(P, Q, qidx):
    nP = len(P)
    shared = [(int(j), int(i)) for i, j in enumerate(qidx) if j < nP]  # (index in P, index in Q)
    if len(shared) == len(P) and len(P) == len(Q):
        maps = [(P[i], 0.5) for i in range(nP)]
        if nP == 3:
            maps.append((P.mean(axis=0), -0.5))
        return maps
    return [(P[i], 0.5) for i, _ in shared]


def _same_set(A, B, tol):
    return all(np.min(np.max(np.abs(B - a), axis=1)) <= tol for a in A)


def _touching(P, Q, s, rtol):
    """Local matrix over the union vertices of a touching pair via self-similarity."""
    dim = P.shape[1]
    U, qidx = _union(P, Q)
    nU = len(U)
    scale = np.ptp(U, axis=0).max()
    maps = _homotheties(P, Q, qidx)
    copies = [(c + r * (P - c), c + r * (Q - c)) for c, r in maps]
    identical = len(U) == len(P)
    rest = np.zeros((nU, nU))
    Pch, Qch = _children(P), (_children(P) if identical else _children(Q))
    for i, Pc in enumerate(Pch):
        for j, Qc in enumerate(Qch):
            if any(_same_set(Pc, a, 1e-12 * scale) and _same_set(Qc, b, 1e-12 * scale) for a, b in copies):
                continue
            Uc, qc = _union(Pc, Qc)
            R = _union_function_values(P, Q, qidx, Uc)
            rest += R.T @ _local(Pc, Qc, s, rtol, disjoint=len(Uc) == len(Pc) + len(Qc)) @ R
    q = 2.0 ** (2 * s - dim)
    N = np.hstack([-np.ones((nU - 1, 1)), np.eye(nU - 1)])
    Np = np.linalg.pinv(N)
    H = Np.T @ rest @ Np
    A = np.eye((nU - 1) ** 2)
    for c, r in maps:
        R = _union_function_values(P, Q, qidx, c + r * (U - c))
        S = N @ R @ Np
        A -= q * np.kron(S.T, S.T)
    G = np.linalg.solve(A, H.ravel()).reshape(nU - 1, nU - 1)
    G = 0.5 * (G + G.T)
    return N.T @ G @ N


def _local(P, Q, s, rtol, disjoint):
    """Cached local matrix; the kernel is translation invariant and congruent pairs recur."""
    o = P[0]
    key = (tuple((P - o).ravel()), tuple((Q - o).ravel()), s, rtol)
    return (_disjoint_key if disjoint else _touching_key)(key, P.shape[1])


@lru_cache(maxsize=4096)
def _touching_key(key, dim):
    Pr, Qr, s, rtol = key
    P = np.array(Pr).reshape(-1, dim)
    Q = np.array(Qr).reshape(-1, dim)
    return _touching(P, Q, s, rtol)


@lru_cache(maxsize=65536)
def _disjoint_key(key, dim):
    Pr, Qr, s, rtol = key
    return _disjoint(np.array(Pr).reshape(-1, dim), np.array(Qr).reshape(-1, dim), s, rtol)


def pair_matrix(P, Q, s: float, rtol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Local interaction matrix of two simplices over their union vertices.

    Returns (U, L) with U the union vertex coordinates (P's vertices first) and
    L[a, b] = int_P int_Q |x-y|^(-n-2s) D_a D_b, D_a = phi_a(x) - phi_a(y).
    """
    s = check_order(s)
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    if P.ndim == 1:
        P, Q = P.reshape(-1, 1), Q.reshape(-1, 1)
    U, _ = _union(P, Q)
    return U, _local(P, Q, s, rtol, disjoint=len(U) == len(P) + len(Q))


# --------------------------------------------------------------------------- exterior term


def ray_cast_exterior_weight(x, segments, s: float, pieces: int = 48) -> float:
    """Exterior integral of |x-y|^(-2-2s) by casting rays from x.

    Along each direction the exterior of a polygon is a union of radial
    intervals [a, b] contributing (a^(-2s) - b^(-2s)) / (2s). The angle is
    integrated piecewise between vertex directions with Gauss-Legendre.
    """
    x = np.asarray(x, dtype=np.float64)
    A = segments[:, 0] - x
    B = segments[:, 1] - x
    ang = np.sort(np.mod(np.arctan2(A[:, 1], A[:, 0]), 2 * np.pi))
    ang = np.concatenate([ang, [ang[0] + 2 * np.pi]])
    g, wg = np.polynomial.legendre.leggauss(pieces)
    total = 0.0
    for lo, hi in zip(ang[:-1], ang[1:]):
        if hi - lo < 1e-15:
            continue
        th = lo + (hi - lo) * (g + 1) / 2
        d = np.stack([np.cos(th), np.sin(th)], axis=1)
        # ray x + r d meets segment A + t (B - A): solve r d - t (B - A) = A
        E = B - A
        det = d[:, None, 0] * (-E[None, :, 1]) - d[:, None, 1] * (-E[None, :, 0])
        with np.errstate(divide="ignore", invalid="ignore"):
            r = (A[None, :, 0] * (-E[None, :, 1]) - A[None, :, 1] * (-E[None, :, 0])) / det
            t = (d[:, None, 0] * A[None, :, 1] - d[:, None, 1] * A[None, :, 0]) / det
        hit = (np.abs(det) > 0) & (t >= 0) & (t <= 1) & (r > 0)
        vals = np.zeros(len(th))
        for k in range(len(th)):
            rs = np.sort(r[k][hit[k]])
            # crossings alternate inside -> outside -> inside ...; x is inside
            acc = 0.0
            for j in range(0, len(rs), 2):
                a = rs[j]
                b = rs[j + 1] if j + 1 < len(rs) else np.inf
                acc += a ** (-2 * s) - (0.0 if np.isinf(b) else b ** (-2 * s))
            vals[k] = acc
        total += 0.5 * (hi - lo) * np.sum(wg * vals)
    return total / (2 * s)


def _tanh_sinh(level):
    """Nodes/weights of tanh-sinh quadrature on (0, 1) with step 2^-level."""
    h = 2.0 ** (-level)
    t = h * np.arange(-int(4.0 / h), int(4.0 / h) + 1)
    u = 0.5 * np.pi * np.sinh(t)
    x = 1 / (1 + np.exp(-2 * u))
    xm = 1 / (1 + np.exp(2 * u))  # 1 - x without cancellation
    with np.errstate(over="ignore"):
        w = 0.5 * h * 0.5 * np.pi * np.cosh(t) / np.cosh(u) ** 2
    # the integrands vanish at the endpoints; nodes closer than 1e-30 are dropped
    keep = (x > 1e-30) & (xm > 1e-30)
    return x[keep], xm[keep], w[keep]


def exterior_element_matrix(T, segments, s: float, local, rtol: float = 1e-11) -> np.ndarray:
    """int_T phi_a phi_b w(x) dx for local vertex pairs a, b in `local` (2D).

    Uses tanh-sinh in the collapsed coordinates x = V0 + u((1-v)V1 + vV2 - V0),
    refining the step until the result stabilises.
    """
    T = np.asarray(T, dtype=np.float64)
    local = list(local)
    area2 = 2 * _measure(T)
    prev = None
    for level in range(3, 9):
        u, um, wu = _tanh_sinh(level)
        U, V = np.meshgrid(u, u, indexing="ij")
        W = np.outer(wu, wu)
        Um = np.meshgrid(um, u, indexing="ij")[0]
        Vm = np.meshgrid(u, um, indexing="ij")[1]
        lam = np.stack([Um, U * Vm, U * V], axis=-1).reshape(-1, 3)
        x = lam @ T
        w = polygon_exterior_weight(x, segments, s)
        f = (W * U).ravel() * area2 * w
        val = np.array([[np.sum(f * lam[:, a] * lam[:, b]) for b in local] for a in local])
        if prev is not None and np.max(np.abs(val - prev)) <= rtol * np.max(np.abs(val)):
            return val
        prev = val
    raise OracleError("tanh-sinh exterior integral did not converge")


def _interval_exterior_entries(a, b, lo, hi, s, local=(0, 1)):
    """int over [lo, hi] of phi_i phi_j w for the hats `local` of the element [lo, hi].

    Entries involving a hat that is nonzero at a boundary end are left at zero:
    they are not needed and diverge for s >= 1/2.
    """

    def f(x, i, j):
        phi = ((hi - x) / (hi - lo), (x - lo) / (hi - lo))
        return phi[i] * phi[j] * float(interval_exterior_weight(x, a, b, s))

    out = np.zeros((2, 2))
    for i in local:
        for j in local:
            if j >= i:
                out[i, j] = out[j, i] = integrate.quad(f, lo, hi, args=(i, j), epsabs=0, epsrel=1e-13, limit=200)[0]
    return out


# --------------------------------------------------------------------------- assembled oracle


def oracle_stiffness(mesh: Mesh, s: float, rtol: float = 1e-10) -> np.ndarray:
    """Dense stiffness matrix on the interior DOFs, computed by the oracle."""
    s = check_order(s)
    dof = mesh.dof_of_vertex
    n = mesh.n_dofs
    if n == 0:
        raise ValueError("mesh has no interior degrees of freedom")
    K = np.zeros((n, n))
    V, E = mesh.vertices, mesh.elements
    active = {t for t in range(mesh.n_elements) if np.any(dof[E[t]] >= 0)}
    for a in range(mesh.n_elements):
        for b in range(a, mesh.n_elements):
            if a not in active and b not in active:
                continue
            P, Q = V[E[a]], V[E[b]]
            U, L = pair_matrix(P, Q, s, rtol)
            ids = _union_ids(E[a], E[b])
            d = dof[ids]
            keep = np.flatnonzero(d >= 0)
            fac = 1.0 if a == b else 2.0
            K[np.ix_(d[keep], d[keep])] += fac * L[np.ix_(keep, keep)]
    if mesh.dim == 1:
        lo, hi = V[:, 0].min(), V[:, 0].max()
        for t in sorted(active):
            ids = E[t]
            d = dof[ids]
            keep = np.flatnonzero(d >= 0)
            loc = _interval_exterior_entries(lo, hi, V[ids[0], 0], V[ids[1], 0], s, tuple(keep))
            K[np.ix_(d[keep], d[keep])] += 2 * loc[np.ix_(keep, keep)]
    else:
        segs = mesh.boundary_segments
        for t in sorted(active):
            ids = E[t]
            d = dof[ids]
            keep = np.flatnonzero(d >= 0)
            loc = exterior_element_matrix(V[ids], segs, s, keep)
            K[np.ix_(d[keep], d[keep])] += 2 * loc
    K *= normalization_constant(mesh.dim, s).value
    return 0.5 * (K + K.T)


def _union_ids(ea, eb):
    ids = list(ea)
    ids += [v for v in eb if v not in ids]
    return np.array(ids)


def stiffness_entry_oracle(mesh: Mesh, s: float, i: int, j: int, rtol: float = 1e-10) -> float:
    """Single stiffness entry K[i, j] (interior DOF indices) via the oracle."""
    n = mesh.n_dofs
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError("dof index out of range")
    vi, vj = mesh.interior_dofs[i], mesh.interior_dofs[j]
    E = mesh.elements
    near_i = {t for t in range(mesh.n_elements) if vi in E[t]}
    near_j = {t for t in range(mesh.n_elements) if vj in E[t]}
    total = 0.0
    V = mesh.vertices
    for a in range(mesh.n_elements):
        for b in range(a, mesh.n_elements):
            pair = {a, b}
            if not (pair & near_i and pair & near_j):
                continue
            _, L = pair_matrix(V[E[a]], V[E[b]], s, rtol)
            ids = list(_union_ids(E[a], E[b]))
            total += (1.0 if a == b else 2.0) * L[ids.index(vi), ids.index(vj)]
    for t in near_i & near_j:
        ids = list(E[t])
        ia, ib = ids.index(vi), ids.index(vj)
        if mesh.dim == 1:
            lo, hi = V[:, 0].min(), V[:, 0].max()
            loc = _interval_exterior_entries(lo, hi, V[ids[0], 0], V[ids[1], 0], s, tuple(sorted({ia, ib})))
            total += 2 * loc[ia, ib]
        else:
            total += 2 * exterior_element_matrix(V[ids], mesh.boundary_segments, s, [ia, ib])[0, 1 if ia != ib else 0]
    return total * normalization_constant(mesh.dim, s).value
