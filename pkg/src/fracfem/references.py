"""Published reference values used for comparison in reports and acceptance tests.

"fem_*" entries are previously published P1 finite element results on the same
problems (extrapolated eigenvalues, fitted orders, upper bounds at a fixed mesh
size). Other entries are labeled by their source: the Kwasnicki asymptotic
formula, the Duo-Zhang fractional Schroedinger computations, the Dyda-Kuznetsov-
Kwasnicki two-sided ball estimates and the Chen-Song / Kwasnicki square bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["IntervalRow", "DiskRow", "SquareRow", "LShapeRow", "INTERVAL", "DISK", "SQUARE", "LSHAPE", "row_for"]


@dataclass(frozen=True)
class IntervalRow:
    s: float
    fem_ext: tuple  # lambda_ext^(1), lambda_ext^(2)
    duo_zhang: tuple  # None where unavailable
    kwasnicki: tuple  # leading term of the asymptotic formula, 4 digits
    fem_order_lambda: tuple
    fem_order_u: tuple


@dataclass(frozen=True)
class DiskRow:
    s: float
    dkk: float  # sharp two-sided estimate, unit disk
    fem_ext: float
    fem_upper: float  # FEM upper bound, h ~ 0.02
    fem_order: float


@dataclass(frozen=True)
class SquareRow:
    s: float
    lower: float
    lower_source: str
    upper: float
    upper_source: str
    fem_upper: float  # FEM upper bound, h ~ 0.04
    fem_ext: float
    fem_order: float


@dataclass(frozen=True)
class LShapeRow:
    s: float
    fem_upper: float  # FEM upper bound, h ~ 0.04
    fem_ext: float
    fem_order: float


INTERVAL = (
    IntervalRow(0.05, (0.9726, 1.0922), (0.9726, 1.0922), (0.9809, 1.0913), (1.1082, 1.1488), (0.5507, 0.5676)),
    IntervalRow(0.1, (0.9575, 1.1965), (0.9575, 1.1966), (0.9712, 1.1948), (1.0706, 1.1017), (0.6117, 0.6250)),
    IntervalRow(0.25, (0.9702, 1.6015), (0.9702, 1.6016), (0.9908, 1.5977), (1.0210, 1.0375), (0.7616, 0.7823)),
    IntervalRow(0.5, (1.1577, 2.7548), (1.1578, 2.7549), (1.1781, 2.7488), (1.0005, 0.9793), (0.9605, 0.9691)),
    IntervalRow(0.75, (1.5975, 5.0598), (1.5976, 5.0600), (1.6114, 5.0545), (0.9983, 0.9990), (0.9983, 0.9984)),
    IntervalRow(0.9, (2.0487, 7.5031), (None, None), (2.0555, 7.5003), (1.0035, 1.0214), (0.9989, 0.9989)),
    IntervalRow(0.95, (2.2481, 8.5958), (2.2441, 8.5959), (2.2477, 8.5942), (1.0352, 1.1418), (0.9989, 0.9989)),
)

DISK = (
    DiskRow(0.005, 1.00475, 1.00475, 1.00480, 0.9462),
    DiskRow(0.05, 1.05095, 1.05094, 1.05145, 0.9455),
    DiskRow(0.25, 1.34373, 1.34367, 1.34626, 0.9497),
    DiskRow(0.5, 2.00612, 2.00607, 2.01060, 0.9686),
    DiskRow(0.75, 3.27594, 3.27632, 3.28043, 1.0092),
)

SQUARE = (
    SquareRow(0.05, 1.0308, "kwasnicki", 1.0831, "chen-song", 1.0412, 1.0405, 0.9229),
    SquareRow(0.1, 1.0506, "kwasnicki", 1.1731, "chen-song", 1.0895, 1.0882, 0.9230),
    SquareRow(0.25, 1.1587, "kwasnicki", 1.4905, "chen-song", 1.2844, 1.2813, 0.9283),
    SquareRow(0.5, 1.3844, "kwasnicki", 2.2214, "chen-song", 1.8395, 1.8344, 0.9622),
    SquareRow(0.75, 1.6555, "chen-song", 3.3109, "chen-song", 2.8921, 2.8872, 0.9940),
    SquareRow(0.9, 2.1034, "chen-song", 4.2067, "chen-song", 3.9492, 3.9467, 1.0654),
    SquareRow(0.95, 2.2781, "chen-song", 4.5562, "chen-song", 4.4083, 4.4062, 1.1496),
)

LSHAPE = (
    LShapeRow(0.1, 1.1434, 1.1413, 0.9085),
    LShapeRow(0.2, 1.3386, 1.3342, 0.9103),
    LShapeRow(0.3, 1.6025, 1.5956, 0.9160),
    LShapeRow(0.4, 1.9593, 1.9499, 0.9267),
    LShapeRow(0.5, 2.4440, 2.4322, 0.9459),
    LShapeRow(0.6, 3.1072, 3.0936, 0.9812),
    LShapeRow(0.7, 4.0228, 4.0069, 0.9822),
    LShapeRow(0.8, 5.2994, 5.2831, 1.0609),
    LShapeRow(0.9, 7.0975, 7.0790, 1.1891),
)


def row_for(table, s: float):
    for row in table:
        if abs(row.s - s) < 1e-12:
            return row
    return None
