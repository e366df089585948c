"""Shared helpers for the test suite."""

import numpy as np


def bary(p):
    return np.column_stack([1 - p.sum(axis=1), p])


def det(T):
    return abs(np.linalg.det(T[1:] - T[0])) if T.shape[1] > 1 else abs(T[1, 0] - T[0, 0])


def rule_pair_matrix(P, Q, s, rule, n_shared):
    """Local pair matrix sum w k D D^T from a singular pair rule; shared vertices first in P and Q."""
    n = P.shape[1]
    nv = n + 1
    bx, by = bary(rule.points_x), bary(rule.points_y)
    x, y = bx @ P, by @ Q
    k = np.sum((x - y) ** 2, axis=1) ** (-(n + 2 * s) / 2)
    D = np.zeros((len(k), 2 * nv - n_shared))
    D[:, :nv] = bx
    D[:, :n_shared] -= by[:, :n_shared]
    D[:, nv:] = -by[:, n_shared:]
    return (D * (rule.weights * k)[:, None]).T @ D * det(P) * det(Q)
