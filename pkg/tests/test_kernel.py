import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracfem.kernel import (
    EigenBounds,
    chen_song_bounds,
    check_order,
    interval_laplacian_eigenvalue,
    kwasnicki_estimate,
    normalization_constant,
    scale_eigenvalue,
    square_laplacian_eigenvalues,
)

orders = st.floats(min_value=1e-3, max_value=0.999)


def test_normalization_constant_half():
    assert normalization_constant(1, 0.5).value == pytest.approx(1 / (2 * math.pi), rel=1e-14)
    assert normalization_constant(2, 0.5).value == pytest.approx(1 / (4 * math.pi), rel=1e-14)


def test_normalization_constant_vanishes_as_s_to_zero():
    vals = [normalization_constant(1, s).value for s in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-5


@pytest.mark.parametrize("n", [1, 2])
def test_normalization_constant_positive_on_grid(n):
    for s in np.linspace(0.001, 0.999, 100):
        c = normalization_constant(n, s)
        assert math.isfinite(c.value) and c.value > 0 and c.n == n


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_invalid_order_rejected(bad):
    with pytest.raises(ValueError):
        check_order(bad)
    with pytest.raises(ValueError):
        normalization_constant(1, bad)


def test_invalid_dimension_rejected():
    with pytest.raises(ValueError):
        normalization_constant(0, 0.5)


@pytest.mark.parametrize(
    "k,s,expected",
    [(1, 0.5, 1.1781), (2, 0.75, 5.0545), (1, 0.95, 2.2477), (2, 0.05, 1.0913)],
)
def test_kwasnicki_reference_values(k, s, expected):
    assert kwasnicki_estimate(k, s) == pytest.approx(expected, abs=6e-5)


def test_kwasnicki_closed_forms():
    assert kwasnicki_estimate(1, 0.5) == pytest.approx(3 * math.pi / 8, rel=1e-15)
    assert kwasnicki_estimate(2, 0.75) == pytest.approx((15 * math.pi / 16) ** 1.5, rel=1e-15)


@given(orders)
def test_kwasnicki_increasing_in_k(s):
    vals = [kwasnicki_estimate(k, s) for k in range(1, 21)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_chen_song_square():
    mu = math.pi**2 / 2
    assert chen_song_bounds(mu, 0.5).upper == pytest.approx(2.2214, abs=5e-5)
    b = chen_song_bounds(mu, 0.75)
    assert (b.lower, b.upper) == pytest.approx((1.6555, 3.3109), abs=5e-5)
    assert square_laplacian_eigenvalues(1)[0] == pytest.approx(mu, rel=1e-15)


def test_chen_song_trivial_and_errors():
    b = chen_song_bounds(1.0, 0.3)
    assert (b.lower, b.upper) == (0.5, 1.0)
    with pytest.raises(ValueError):
        chen_song_bounds(2.0, 0.5, convex=False)
    assert chen_song_bounds(4.0, 0.5, convex=False, c_domain=0.25).lower == pytest.approx(0.5)


@given(st.floats(min_value=1e-3, max_value=1e4), orders)
def test_chen_song_ordered(mu, s):
    b = chen_song_bounds(mu, s)
    assert 0 < b.lower <= b.upper


def test_eigen_bounds_validation():
    with pytest.raises(ValueError):
        EigenBounds(2.0, 1.0)
    assert EigenBounds(1.0, 2.0).contains(1.5)


def test_scale_eigenvalue_examples():
    assert scale_eigenvalue(1.1781, 1.0, 0.5) == 1.1781
    assert scale_eigenvalue(2.0061, 2.0, 0.5) == pytest.approx(1.00305, rel=1e-14)


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 10), orders)
def test_scale_eigenvalue_composes(lam, g1, g2, s):
    a = scale_eigenvalue(scale_eigenvalue(lam, g1, s), g2, s)
    assert a == pytest.approx(scale_eigenvalue(lam, g1 * g2, s), rel=1e-14)


def test_laplacian_closed_forms():
    assert interval_laplacian_eigenvalue(2) == pytest.approx(math.pi**2)
    sq = square_laplacian_eigenvalues(4)
    assert sq[1] == sq[2] and sq == sorted(sq)
