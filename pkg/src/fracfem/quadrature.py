"""Quadrature rules for the fractional stiffness form.

Reference simplices are [0, 1] and the triangle with vertices (0,0), (1,0), (0,1).
Pair rules for touching elements assume the shared vertices come first, in the
same order, in both elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc, roots_jacobi, roots_legendre

from .kernel import check_order
from .mesh import PairClass

__all__ = [
    "QuadRule",
    "PairQuadRule",
    "MAX_SIMPLEX_ORDER",
    "gauss_simplex",
    "gauss_legendre01",
    "gauss_jacobi01",
    "singular_pair_rule",
    "complement_weight",
    "interval_exterior_weight",
    "polygon_exterior_weight",
]

MAX_SIMPLEX_ORDER = 61


@dataclass(frozen=True, eq=False)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class PairQuadRule:
    """Rule for integrals over T1 x T2 given in reference coordinates.

    Sum(weights * f(points_x, points_y)) approximates the integral of f over
    the reference pair. The singular radial factor of the kernel is built into
    the weights, so the rule is accurate for f ~ |x - y|^(-n-2s) * N(x, y)
    with N vanishing to order `numerator_order` on the diagonal.
    """

    points_x: np.ndarray
    points_y: np.ndarray
    weights: np.ndarray
    tag: str
    dim: int
    numerator_order: int

    def __len__(self):
        return len(self.weights)


def gauss_legendre01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_jacobi01(n: int, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with sum w f(t) ~ int_0^1 t^gamma f(t) dt."""
    if gamma <= -1:
        raise ValueError(f"weight t^{gamma} is not integrable at 0")
    x, w = roots_jacobi(n, 0.0, gamma)
    return 0.5 * (x + 1.0), w * 2.0 ** (-1.0 - gamma)


def _n_points(order: int) -> int:
    return order // 2 + 1


def _sym3(a):
    b = 1 - 2 * a
    return [(a, a), (b, a), (a, b)]


@lru_cache(maxsize=None)
def _triangle_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    if order <= 1:
        pts, w = [(1 / 3, 1 / 3)], [1.0]
    elif order == 2:
        pts, w = [(1 / 6, 1 / 6), (2 / 3, 1 / 6), (1 / 6, 2 / 3)], [1 / 3] * 3
    elif order in (3, 4):
        pts = _sym3(0.445948490915965) + _sym3(0.091576213509771)
        w = [0.223381589678011] * 3 + [0.109951743655322] * 3
    elif order == 5:
        r = math.sqrt(15.0)
        a1, a2 = (6 - r) / 21, (6 + r) / 21
        pts = [(1 / 3, 1 / 3)] + _sym3(a1) + _sym3(a2)
        w = [9 / 40] + [(155 - r) / 1200] * 3 + [(155 + r) / 1200] * 3
    else:
        # conical product: (x, y) = (u v, 1 - u) with the Jacobian u in the Jacobi weight
        n = _n_points(order)
        u, wu = gauss_jacobi01(n, 1.0)
        v, wv = gauss_legendre01(n)
        U, V = np.meshgrid(u, v, indexing="ij")
        pts = np.stack([(U * V).ravel(), (1 - U).ravel()], axis=1)
        return pts, np.outer(wu, wv).ravel()
    pts = np.array(pts, dtype=np.float64)
    w = 0.5 * np.array(w, dtype=np.float64) / np.sum(w)
    return pts, w


def gauss_simplex(dim: int, order: int) -> QuadRule:
    """Gauss rule on the reference simplex exact up to polynomial degree `order`."""
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    if order < 1 or order > MAX_SIMPLEX_ORDER:
        raise ValueError(f"unsupported order {order}; supported 1..{MAX_SIMPLEX_ORDER}")
    if dim == 1:
        x, w = gauss_legendre01(_n_points(order))
        pts = x.reshape(-1, 1)
    else:
        pts, w = _triangle_rule(order)
    pts = pts.copy()
    w = w.copy()
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(pts, w)


# --------------------------------------------------------------------------- pair rules

_GRAD = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # gradients of barycentrics on _TRI
_HEX = np.array([[1, 0], [0, 1], [-1, 1], [-1, 0], [0, -1], [1, -1]], dtype=np.float64)


def _tag_and_dim(cls, dim):
    tag = cls.tag if isinstance(cls, PairClass) else str(cls)
    if isinstance(cls, PairClass) and tag == "identical":
        dim = len(cls.shared_vertices) - 1
    if tag == "disjoint":
        raise ValueError("disjoint pairs use a regular tensor Gauss rule, not a singular pair rule")
    if tag not in ("identical", "vertex_touching", "edge_touching"):
        raise ValueError(f"unknown pair class {tag!r}")
    if tag == "edge_touching" and dim != 2:
        raise ValueError("edge_touching pairs exist only in 2D")
    return tag, dim


def singular_pair_rule(cls, s: float, base_order: int, dim: int = 2, numerator_order: int = 2) -> PairQuadRule:
    """Duffy-type rule for a touching element pair.

    Parameters
    ----------
    cls : PairClass or tag string
    s : fractional order
    base_order : polynomial degree targeted by each 1D factor rule
    dim : spatial dimension (inferred from the shared vertices for identical pairs)
    numerator_order : vanishing order m of the integrand's numerator at the
        singular set; the radial Gauss-Jacobi weights use t^(m - 1 - 2s)
        (identical), xi^(n - 1 - 2s + m) (vertex) and xi^(1 - 2s + m) eta^(m - 2s) (edge).
    """
    s = check_order(s)
    tag, dim = _tag_and_dim(cls, dim)
    if base_order < 1:
        raise ValueError("base_order must be >= 1")
    n = _n_points(base_order)
    m = numerator_order
    if tag == "identical":
        px, py, w = (_identical_1d if dim == 1 else _identical_2d)(s, n, base_order, m)
    elif tag == "vertex_touching":
        px, py, w = (_vertex_1d if dim == 1 else _vertex_2d)(s, n, m)
    else:
        px, py, w = _edge_2d(s, n, m)
    for a in (px, py, w):
        a.setflags(write=False)
    return PairQuadRule(px, py, w, tag, dim, m)


def _radial(n, gamma):
    t, wt = gauss_jacobi01(n, gamma)
    return t, wt * t ** (-gamma)


def _identical_1d(s, n, order, m):
    t, wt = _radial(n, m - 1 - 2 * s)
    b, wb = gauss_legendre01(n)
    T, B = np.meshgrid(t, b, indexing="ij")
    W = np.outer(wt, wb) * (1 - T)
    x1 = T + (1 - T) * B
    x2 = (1 - T) * B
    px = np.concatenate([x1.ravel(), x2.ravel()])
    py = np.concatenate([(x1 - T).ravel(), (x2 + T).ravel()])
    w = np.concatenate([W.ravel(), W.ravel()])
    return px.reshape(-1, 1), py.reshape(-1, 1), w


def _identical_2d(s, n, order, m):
    t, wt = _radial(n, m - 1 - 2 * s)
    c, wc = gauss_legendre01(n)
    beta = gauss_simplex(2, order)
    lam_b = np.column_stack([1 - beta.points.sum(axis=1), beta.points])  # (nb, 3)
    pxs, pys, ws = [], [], []
    for k in range(6):
        d1, d2 = _HEX[k], _HEX[(k + 1) % 6]
        det = abs(d1[0] * d2[1] - d1[1] * d2[0])
        T, C = np.meshgrid(t, c, indexing="ij")
        z = T[..., None] * ((1 - C)[..., None] * d1 + C[..., None] * d2)  # (nt, nc, 2)
        mz = np.maximum(0.0, z @ _GRAD.T)  # (nt, nc, 3)
        lam = mz[:, :, None, :] + (1 - T)[:, :, None, None] * lam_b[None, None]
        x = lam[..., 1:]  # reference coordinates = barycentrics 1 and 2
        y = x - z[:, :, None, :]
        wgt = (np.outer(wt, wc) * T * (1 - T) ** 2 * det)[:, :, None] * beta.weights[None, None]
        pxs.append(x.reshape(-1, 2))
        pys.append(y.reshape(-1, 2))
        ws.append(wgt.ravel())
    return np.concatenate(pxs), np.concatenate(pys), np.concatenate(ws)


def _vertex_1d(s, n, m):
    xi, wx = _radial(n, m - 2 * s)
    eta, we = gauss_legendre01(n)
    X, E = np.meshgrid(xi, eta, indexing="ij")
    W = (np.outer(wx, we) * X).ravel()
    a, b = X.ravel(), (X * E).ravel()
    px = np.concatenate([a, b]).reshape(-1, 1)
    py = np.concatenate([b, a]).reshape(-1, 1)
    return px, py, np.concatenate([W, W])


def _r_to_ref(r1, r2):
    return np.stack([r1 - r2, r2], axis=-1)


def _vertex_2d(s, n, m):
    xi, wx = _radial(n, 1 - 2 * s + m)
    g, wg = gauss_legendre01(n)
    X, E1, E2, E3 = np.meshgrid(xi, g, g, g, indexing="ij")
    W = (wx[:, None, None, None] * wg[None, :, None, None] * wg[None, None, :, None]
         * wg[None, None, None, :] * X**3 * E2).ravel()
    a = _r_to_ref(X, X * E1).reshape(-1, 2)
    b = _r_to_ref(X * E2, X * E2 * E3).reshape(-1, 2)
    return np.concatenate([a, b]), np.concatenate([b, a]), np.concatenate([W, W])


def _edge_2d(s, n, m):
    xi, wx = _radial(n, 1 - 2 * s + m)
    e1, we1 = _radial(n, m - 2 * s)
    g, wg = gauss_legendre01(n)
    X, A, B, C = np.meshgrid(xi, e1, g, g, indexing="ij")
    base = (wx[:, None, None, None] * we1[None, :, None, None] * wg[None, None, :, None]
            * wg[None, None, None, :] * X**3 * A**2)
    regions = [
        ((X, X * A * C), (X - X * A * B, X * A * (1 - B)), 1.0),
        ((X, X * A), (X - X * A * B * C, X * A * B * (1 - C)), B),
        ((X * (1 - A * B), X * A * (1 - B)), (X, X * A * B * C), B),
        ((X * (1 - A * B * C), X * A * B * (1 - C)), (X, X * A), B),
        ((X * (1 - A * B * C), X * A * (1 - B * C)), (X, X * A * B), B),
    ]
    pxs, pys, ws = [], [], []
    for (r1x, r2x), (r1y, r2y), jac in regions:
        pxs.append(_r_to_ref(r1x, r2x).reshape(-1, 2))
        pys.append(_r_to_ref(r1y, r2y).reshape(-1, 2))
        ws.append((base * jac).ravel())
    return np.concatenate(pxs), np.concatenate(pys), np.concatenate(ws)


# --------------------------------------------------------------------------- exterior weights


def complement_weight(x, R: float, n: int, s: float) -> float:
    """Integral of |x - y|^(-n-2s) over |y| > R, for |x| < R."""
    s = check_order(s)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if n not in (1, 2) or x.shape != (n,):
        raise ValueError("x must be a point of dimension n in {1, 2}")
    if not np.linalg.norm(x) < R:
        raise ValueError("x must lie strictly inside the ball")
    if n == 1:
        return ((R - x[0]) ** (-2 * s) + (R + x[0]) ** (-2 * s)) / (2 * s)
    th, wt = gauss_legendre01(64)
    th = 2 * np.pi * th
    d = np.stack([np.cos(th), np.sin(th)], axis=1)
    p = d @ x
    rho = -p + np.sqrt(p * p + R * R - x @ x)
    return float(2 * np.pi * np.sum(wt * rho ** (-2 * s)) / (2 * s))


def interval_exterior_weight(x, a: float, b: float, s: float) -> np.ndarray:
    """Integral of |x - y|^(-1-2s) over y outside (a, b)."""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):  # +inf on the boundary is the correct limit
        return ((b - x) ** (-2 * s) + (x - a) ** (-2 * s)) / (2 * s)


def _half_angle(q, s):
    """int_0^atan(q) cos^(2s) and its tail to pi/2, for q >= 0, as (head, tail)."""
    full = beta_fn(0.5, s + 0.5)
    r = q * q / (1 + q * q)
    head = 0.5 * full * betainc(0.5, s + 0.5, r)
    tail = 0.5 * full * betainc(s + 0.5, 0.5, 1 / (1 + q * q))
    return head, tail


def polygon_exterior_weight(points, segments, s: float) -> np.ndarray:
    """Integral of |x - y|^(-2-2s) over y outside a polygon, for x inside.

    By the divergence theorem the exterior integral reduces to a sum over the
    sides; side e at signed distance d from x (d > 0 when x is on the domain
    side) contributes sign(d) |d|^(-2s) / (2s) * int cos^(2s)(phi) dphi over the
    angles it subtends. Valid for non-convex polygons.
    """
    s = check_order(s)
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    segs = np.asarray(segments, dtype=np.float64)
    out = np.zeros(len(pts))
    for A, B in segs:
        L = np.linalg.norm(B - A)
        u = (B - A) / L
        nu = np.array([u[1], -u[0]])
        d = (A - pts) @ nu
        ta = (A - pts) @ u
        tb = ta + L
        ad = np.abs(d)
        ok = ad > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            qa = np.where(ok, np.abs(ta) / np.where(ok, ad, 1.0), 0.0)
            qb = np.where(ok, np.abs(tb) / np.where(ok, ad, 1.0), 0.0)
        ha, ta_tail = _half_angle(qa, s)
        hb, tb_tail = _half_angle(qb, s)
        same = np.sign(ta) * np.sign(tb) > 0
        # both ends on the same side of the foot point: difference of tails
        phi = np.where(same, np.abs(ta_tail - tb_tail), ha + hb)
        with np.errstate(divide="ignore", invalid="ignore"):
            contrib = np.where(ok, np.sign(d) * ad ** (-2 * s) * phi, 0.0)
        out += contrib / (2 * s)
    return out
