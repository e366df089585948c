"""Nested refinement studies, order fits and eigenfunction error series.

Eigenvalues on nested meshes are fitted to lambda_h = lambda + C h^alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy import optimize

from .assembly import QuadratureConfig, assemble_mass, assemble_stiffness
from .eigensolve import Spectrum, fix_sign, normalize_coarsest, solve_lowest
from .mesh import Mesh, build_mesh, prolongation, refine_uniform

__all__ = [
    "OrderFit",
    "Level",
    "RefinementStudy",
    "EigenfunctionErrorSeries",
    "FitError",
    "BudgetExceeded",
    "three_point_order",
    "fit_order",
    "loglog_slope",
    "run_study",
    "eigenfunction_error_series",
    "interior_prolongation",
]


class FitError(ArithmeticError):
    pass


class BudgetExceeded(RuntimeError):
    """Raised when a level would exceed the DOF budget; carries the partial study."""

    def __init__(self, message, study=None):
        super().__init__(message)
        self.study = study


@dataclass(frozen=True)
class OrderFit:
    lambda_ext: float
    c: float
    alpha: float
    rms_residual: float
    method: str = "gauss-newton"
    iterations: int = 0


def three_point_order(lam_H: float, lam_h: float, lam_h2: float) -> tuple[float, float]:
    """(alpha, lambda_ext) from three values on successively halved meshes."""
    d1, d2 = lam_H - lam_h, lam_h - lam_h2
    if d1 == 0.0 or d2 == 0.0:
        raise FitError("stalled convergence: equal consecutive values")
    if (d1 > 0) != (d2 > 0):
        raise FitError("sign-inconsistent differences")
    alpha = math.log2(d1 / d2)
    den = d1 - d2
    if den == 0.0:
        raise FitError("zero denominator in geometric extrapolation")
    return alpha, lam_h2 - d2 * d2 / den


def _model(p, h):
    return p[0] + p[1] * h ** p[2]


def _gauss_newton(h, y, p, max_iter, step_tol):
    """Damped Gauss-Newton; returns (params, converged, iterations)."""
    lnh = np.log(h)
    for it in range(1, max_iter + 1):
        ha = h ** p[2]
        r = y - (p[0] + p[1] * ha)
        J = np.column_stack([np.ones_like(h), ha, p[1] * ha * lnh])
        step, *_ = np.linalg.lstsq(J, r, rcond=None)
        # halve until the residual does not grow
        t, base = 1.0, float(r @ r)
        while t > 1e-6:
            q = p + t * step
            rq = y - _model(q, h)
            if np.all(np.isfinite(rq)) and float(rq @ rq) <= base * (1 + 1e-12) + 1e-300:
                break
            t *= 0.5
        else:
            return p, False, it
        p = q
        if np.max(np.abs(t * step) / (1.0 + np.abs(p))) < step_tol:
            return p, bool(np.all(np.isfinite(p))), it
    return p, False, max_iter


def _linear_part(h, y, alpha):
    X = np.column_stack([np.ones_like(h), h**alpha])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    return coef, float(r @ r)


def _varpro_seed(h, y, alpha_max=6.0):
    """Global minimizer over alpha of the residual with (lambda, C) eliminated."""
    grid = np.linspace(0.02, alpha_max, 300)
    res = [_linear_part(h, y, a)[1] for a in grid]
    i = int(np.argmin(res))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    a = optimize.minimize_scalar(lambda a: _linear_part(h, y, a)[1], bounds=(lo, hi), method="bounded",
                                 options={"xatol": 1e-12}).x
    coef, _ = _linear_part(h, y, a)
    return np.array([coef[0], coef[1], a])


def fit_order(hs, lambdas, max_iter: int = 100, step_tol: float = 1e-12) -> OrderFit:
    """Least-squares fit of lambda_h = lambda_ext + c h^alpha.

    Gauss-Newton is started from the three-point closed form on the three finest
    levels and from a variable-projection global scan over alpha; the converged fit
    with the smaller residual wins. If neither converges the three-point values are
    returned with method="three-point".
    """
    h = np.asarray(hs, dtype=float)
    y = np.asarray(lambdas, dtype=float)
    if h.size < 3 or h.size != y.size:
        raise ValueError("need at least 3 (h, lambda) pairs of equal length")
    if np.any(np.diff(h) >= 0) or np.any(h <= 0):
        raise ValueError("h must be positive and strictly decreasing")

    def rms(p):
        return float(np.sqrt(np.mean((_model(p, h) - y) ** 2)))

    alpha0, ext0 = three_point_order(*y[-3:])
    seed = np.array([ext0, (y[-1] - ext0) / h[-1] ** alpha0, alpha0])
    best = None
    for label, start in (("gauss-newton", seed), ("varpro+gauss-newton", None)):
        if start is None:
            start = _varpro_seed(h, y)
        p, ok, it = _gauss_newton(h, y, start.copy(), max_iter, step_tol)
        if ok and (best is None or rms(p) < best[0] * (1 - 1e-9)):
            best = (rms(p), p, label, it)
    if best is None:
        return OrderFit(float(seed[0]), float(seed[1]), float(seed[2]), rms(seed), "three-point", max_iter)
    r, p, label, it = best
    return OrderFit(float(p[0]), float(p[1]), float(p[2]), r, label, it)


def loglog_slope(hs, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    x, y = np.log(np.asarray(hs, float)), np.log(np.asarray(errors, float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass(frozen=True)
class Level:
    mesh: Mesh
    h: float
    spectrum: Spectrum
    M: sp.csr_matrix

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_dofs


@dataclass(frozen=True)
class RefinementStudy:
    domain: str
    s: float
    levels: tuple
    reference: Level | None = None
    transfers: tuple = field(default=(), repr=False)  # interior prolongations level i -> i+1 (incl. reference)

    @property
    def hs(self) -> np.ndarray:
        return np.array([lv.h for lv in self.levels])

    def eigenvalues(self, k: int) -> np.ndarray:
        return np.array([lv.spectrum.pairs[k - 1].lam for lv in self.levels])

    def fit(self, k: int) -> OrderFit:
        return fit_order(self.hs, self.eigenvalues(k))


@dataclass(frozen=True)
class EigenfunctionErrorSeries:
    k: int
    hs: np.ndarray
    errors: np.ndarray
    order: float
    cluster_mode: bool


def interior_prolongation(coarse: Mesh, fine: Mesh) -> sp.csr_matrix:
    """Prolongation between interior coefficient vectors of nested meshes."""
    P = prolongation(coarse, fine)
    return P[fine.interior_dofs][:, coarse.interior_dofs].tocsr()


def _solve_level(mesh, s, count, quad, method):
    K = assemble_stiffness(mesh, s, quad)
    M = assemble_mass(mesh)
    return Level(mesh, float(mesh.h_max), solve_lowest(K, M, count, method), M)


def _fix_signs(level, previous, P):
    pairs = []
    for pair in level.spectrum.pairs:
        if previous is None:
            pairs.append(normalize_coarsest(pair))
        else:
            pairs.append(fix_sign(pair, P @ previous.spectrum.pairs[pair.k - 1].coeffs, level.M))
    spec = Spectrum(tuple(pairs), level.spectrum.multiplicity_clusters)
    return Level(level.mesh, level.h, spec, level.M)


def run_study(
    domain: str | Mesh,
    s: float,
    k_max: int,
    n_levels: int,
    base_resolution: int | None = None,
    *,
    reference_refinements: int = 0,
    quad: QuadratureConfig | None = None,
    method: str = "auto",
    budget_dofs: int | None = None,
    progress: Callable[[str], None] | None = None,
) -> RefinementStudy:
    """Solve on `n_levels` nested meshes (plus optional finer reference levels).

    `domain` is a domain tag (with `base_resolution`) or a coarsest Mesh.
    """
    if n_levels < 3:
        raise ValueError("a study needs at least 3 levels")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if isinstance(domain, Mesh):
        mesh, tag = domain, domain.domain
    else:
        if base_resolution is None:
            raise ValueError("base_resolution is required with a domain tag")
        mesh, tag = build_mesh(domain, base_resolution), domain
    if mesh.n_dofs < k_max:
        raise ValueError(f"coarsest mesh has {mesh.n_dofs} interior DOFs, fewer than k_max={k_max}")
    quad = quad or QuadratureConfig.for_dim(mesh.dim)
    levels, transfers = [], []
    previous, ref = None, None
    pending = None  # composed prolongation from `previous` to the current mesh
    total = n_levels + reference_refinements
    for lev in range(total):
        if lev > 0:
            fine = refine_uniform(mesh)
            T = interior_prolongation(mesh, fine)
            transfers.append(T)
            pending = T if pending is None else (T @ pending).tocsr()
            mesh = fine
        if n_levels <= lev < total - 1:
            continue  # intermediate reference meshes are only refined
        if budget_dofs is not None and mesh.n_dofs > budget_dofs:
            partial = RefinementStudy(tag, s, tuple(levels), None, tuple(transfers[: max(len(levels) - 1, 0)]))
            raise BudgetExceeded(f"level {lev} needs {mesh.n_dofs} DOFs > budget {budget_dofs}", partial)
        level = _solve_level(mesh, s, k_max, quad, method)
        level = _fix_signs(level, previous, pending)
        pending = None
        if progress:
            vals = ", ".join(f"{v:.10g}" for v in level.spectrum.values)
            progress(f"{tag} s={s} level {lev} h={level.h:.6g} dofs={mesh.n_dofs} lambda=[{vals}]")
        if lev < n_levels:
            levels.append(level)
        else:
            ref = level
        previous = level
    return RefinementStudy(tag, float(s), tuple(levels), ref, tuple(transfers))


def eigenfunction_error_series(study: RefinementStudy, k: int, cluster: bool | None = None) -> EigenfunctionErrorSeries:
    """L2 errors of the k-th eigenfunction at each fitted level against the reference level.

    With a multiple eigenvalue (cluster of the reference spectrum has >1 member, or
    cluster=True) the reference function is compared with its best L2 approximation
    from the span of the level's discrete cluster.
    """
    ref = study.reference
    if ref is None:
        raise ValueError("study has no reference level; use reference_refinements >= 2")
    n_fit = len(study.levels)
    if len(study.transfers) < n_fit + 1:
        raise ValueError("reference level must be at least 2 refinements finer than the last fitted level")
    u_ref = ref.spectrum.pairs[k - 1].coeffs
    Mref = ref.M
    members = ref.spectrum.cluster_of(k)
    if cluster is None:
        cluster = len(members) > 1
    errors = []
    for i, level in enumerate(study.levels):
        if cluster:
            idx = [m - 1 for m in sorted(set(members) | set(level.spectrum.cluster_of(k)))]
            V = level.spectrum.vectors[:, idx]
        else:
            V = level.spectrum.pairs[k - 1].coeffs[:, None]
        for T in study.transfers[i:]:
            V = T @ V
        if cluster:
            G = V.T @ (Mref @ V)
            coef = np.linalg.solve(G, V.T @ (Mref @ u_ref))
            d = u_ref - V @ coef
        else:
            d = u_ref - V[:, 0]
        errors.append(math.sqrt(max(float(d @ (Mref @ d)), 0.0)))
    errors = np.array(errors)
    if np.any(errors <= 0):
        raise FitError("zero eigenfunction error: reference coincides with a fitted level")
    hs = study.hs
    return EigenfunctionErrorSeries(k, hs, errors, loglog_slope(hs, errors), bool(cluster))
