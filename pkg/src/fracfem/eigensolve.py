"""Lowest eigenpairs of K u = lambda M u."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "EigenPair",
    "Spectrum",
    "SignAmbiguityWarning",
    "DENSE_LIMIT",
    "CLUSTER_RTOL",
    "solve_lowest",
    "fix_sign",
    "normalize_coarsest",
    "rayleigh_quotient",
    "residual_norm",
    "clusters",
]

DENSE_LIMIT = 3000
CLUSTER_RTOL = 1e-6


class SignAmbiguityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EigenPair:
    lam: float
    coeffs: np.ndarray
    k: int
    ambiguous_sign: bool = False


@dataclass(frozen=True)
class Spectrum:
    pairs: tuple
    multiplicity_clusters: tuple = field(default=())

    @property
    def values(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs])

    @property
    def vectors(self) -> np.ndarray:
        return np.column_stack([p.coeffs for p in self.pairs])

    def cluster_of(self, k: int) -> tuple:
        """1-based indices of the cluster containing eigenvalue k."""
        for c in self.multiplicity_clusters:
            if k in c:
                return c
        return (k,)

    def __len__(self):
        return len(self.pairs)


def _as_dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def clusters(values, rtol: float = CLUSTER_RTOL) -> tuple:
    """Group ascending eigenvalues whose relative gap is below rtol (1-based indices)."""
    out, cur = [], [1]
    for k in range(1, len(values)):
        if values[k] - values[k - 1] < rtol * abs(values[k]):
            cur.append(k + 1)
        else:
            out.append(tuple(cur))
            cur = [k + 1]
    if len(values):
        out.append(tuple(cur))
    return tuple(out)


def _m_orthonormalize(V, M):
    # one pass of Gram-Schmidt in the M inner product cleans up iterative output
    V = V.copy()
    for j in range(V.shape[1]):
        for i in range(j):
            V[:, j] -= (V[:, i] @ (M @ V[:, j])) * V[:, i]
        V[:, j] /= np.sqrt(V[:, j] @ (M @ V[:, j]))
    return V


def solve_lowest(K, M, count: int, method: str = "auto") -> Spectrum:
    """The `count` smallest eigenpairs, M-orthonormal and ascending.

    method: "dense" (Cholesky reduction, LAPACK), "iterative" (shift-invert Lanczos
    about zero), or "auto" (dense up to DENSE_LIMIT unknowns).
    """
    n = K.shape[0]
    if n == 0:
        raise ValueError("empty system")
    if K.shape != M.shape:
        raise ValueError(f"shape mismatch {K.shape} vs {M.shape}")
    if not (1 <= count <= n):
        raise ValueError(f"count must lie in [1, {n}], got {count}")
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "iterative"
    Md = _as_dense(M)
    if method == "dense" or count >= n - 1:
        try:
            lam, V = sla.eigh(_as_dense(K), Md, subset_by_index=[0, count - 1])
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"generalized eigensolve failed: {exc}") from exc
    elif method == "iterative":
        Ms = sp.csr_matrix(M)
        lam, V = spla.eigsh(_as_dense(K), k=count, M=Ms, sigma=0.0, which="LM", tol=1e-14)
        order = np.argsort(lam)
        lam, V = lam[order], _m_orthonormalize(V[:, order], Ms)
    else:
        raise ValueError(f"unknown method {method!r}")
    if np.any(lam <= 0):
        raise np.linalg.LinAlgError(f"non-positive eigenvalue {lam.min()}: stiffness matrix is not positive definite")
    pairs = tuple(EigenPair(float(lam[k]), np.ascontiguousarray(V[:, k]), k + 1) for k in range(count))
    return Spectrum(pairs, clusters(lam))


def fix_sign(pair: EigenPair, reference, M) -> EigenPair:
    """Flip so that (u_h, reference)_M >= 0; flag (and warn) when the product is ~0."""
    reference = np.asarray(reference, dtype=float)
    if reference.shape != pair.coeffs.shape:
        raise ValueError("reference and coefficients differ in length")
    Mr = M @ reference
    ip = float(pair.coeffs @ Mr)
    scale = np.sqrt(abs(pair.coeffs @ (M @ pair.coeffs)) * abs(reference @ Mr))
    if abs(ip) <= 1e-14 * max(scale, 1e-300):
        warnings.warn(f"sign of eigenvector {pair.k} is ambiguous", SignAmbiguityWarning, stacklevel=2)
        return replace(pair, ambiguous_sign=True)
    if ip < 0:
        return replace(pair, coeffs=-pair.coeffs)
    return pair


def normalize_coarsest(pair: EigenPair) -> EigenPair:
    """Make the entry of largest magnitude positive."""
    c = pair.coeffs
    return replace(pair, coeffs=-c) if c[np.argmax(np.abs(c))] < 0 else pair


def rayleigh_quotient(K, M, v) -> float:
    v = np.asarray(v, dtype=float)
    den = float(v @ (M @ v))
    if not np.any(v) or den == 0.0:
        raise ValueError("Rayleigh quotient of the zero vector")
    return float(v @ (K @ v)) / den


def residual_norm(K, M, pair: EigenPair) -> float:
    """||K u - lam M u||_2 / ||K u||_2."""
    Ku = K @ pair.coeffs
    return float(np.linalg.norm(Ku - pair.lam * (M @ pair.coeffs)) / np.linalg.norm(Ku))
