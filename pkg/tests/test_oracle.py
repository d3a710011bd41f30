import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cbalance import oracle
from cbalance.oracle import (
    LOG4,
    OracleError,
    brute_force_min_value,
    grid_argmax,
    value_at_optimal_d,
    jsd,
    kl,
    kl_decomposition,
    optimal_discriminator,
    scalar_maximizer,
    simplex_grid,
    jsd_identity_residual,
)

mpmath.mp.dps = 50


def mp_kl(p, q):
    total = mpmath.mpf(0)
    for a, b in zip(p, q):
        if a > 0:
            total += mpmath.mpf(a) * mpmath.log(mpmath.mpf(a) / mpmath.mpf(b))
    return total


def mp_jsd(p, q):
    m = [(mpmath.mpf(a) + mpmath.mpf(b)) / 2 for a, b in zip(p, q)]
    return mp_kl(p, m) / 2 + mp_kl(q, m) / 2


def mp_h(p, q):
    total = mpmath.mpf(0)
    for a, b in zip(p, q):
        a, b = mpmath.mpf(a), mpmath.mpf(b)
        if a > 0:
            total += a * mpmath.log(a / (a + b))
        if b > 0:
            total += b * mpmath.log(b / (a + b))
    return total


def dists(k_max=8):
    return st.integers(2, k_max).flatmap(
        lambda k: st.tuples(
            st.lists(st.floats(0, 1), min_size=k, max_size=k),
            st.lists(st.floats(0, 1), min_size=k, max_size=k),
        )
    )


def normalize(v):
    v = np.asarray(v, dtype=float)
    if v.sum() == 0:
        v = v + 1.0
    return v / v.sum()


def test_kl_examples():
    p = [0.5, 0.5]
    assert kl(p, p) == 0.0
    assert kl(p, [1.0, 0.0]) == math.inf
    expected = float(mp_kl(p, [0.75, 0.25]))
    assert expected == pytest.approx(0.143841, abs=1e-6)
    assert kl(p, [0.75, 0.25]) == pytest.approx(expected, abs=1e-15)


def test_kl_support_mismatch():
    with pytest.raises(OracleError):
        kl([0.5, 0.5], [1.0, 0.0, 0.0])


def test_distribution_validation():
    with pytest.raises(OracleError):
        oracle.as_dist([0.5, 0.6])
    with pytest.raises(OracleError):
        oracle.as_dist([1.5, -0.5])


def test_jsd_examples():
    assert jsd([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert jsd([1.0, 0.0], [0.0, 1.0]) == pytest.approx(math.log(2), abs=1e-15)
    expected = float(mp_jsd([0.5, 0.5], [1.0, 0.0]))
    assert expected == pytest.approx(0.215761, abs=1e-6)
    assert jsd([0.5, 0.5], [1.0, 0.0]) == pytest.approx(expected, abs=1e-15)


def test_jsd_finite_with_subnormal_mass():
    # (p + q) / 2 underflows to zero for the smallest subnormal
    p, q = [1.0, 0.0], [1.0 - 5e-324, 5e-324]
    v = jsd(p, q)
    assert math.isfinite(v) and 0.0 <= v < 1e-300
    assert jsd_identity_residual(p, q) < 1e-15


def test_optimal_discriminator_examples():
    p = [0.2, 0.3, 0.5]
    assert np.all(optimal_discriminator(p, p) == 0.5)
    d = optimal_discriminator([0.5, 0.5], [0.25, 0.75])
    assert d == pytest.approx([2 / 3, 0.4], abs=1e-15)
    d = optimal_discriminator([0.5, 0.5, 0.0], [0.0, 0.5, 0.5])
    assert list(d) == [1.0, 0.5, 0.0]
    assert optimal_discriminator([1.0, 0.0], [1.0, 0.0])[1] == 0.5


def test_value_at_optimal_d_examples():
    assert value_at_optimal_d([0.25, 0.75], [0.25, 0.75]) == pytest.approx(-LOG4, abs=1e-15)
    expected = float(mp_h([0.5, 0.5], [1.0, 0.0]))
    assert expected == pytest.approx(-0.954771, abs=1e-6)
    assert value_at_optimal_d([0.5, 0.5], [1.0, 0.0]) == pytest.approx(expected, abs=1e-15)


def test_value_at_optimal_d_matches_direct_sum():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p, q = oracle.random_dist(rng, 5), oracle.random_dist(rng, 5)
        d = optimal_discriminator(p, q)
        direct = float(np.sum(p * np.log(d)) + np.sum(q * np.log(1 - d)))
        assert value_at_optimal_d(p, q) == pytest.approx(direct, abs=1e-12)


def test_jsd_identity_residual_random_pairs():
    rng = np.random.default_rng(42)
    for i in range(1000):
        k = int(rng.integers(2, 17))
        sp = 0.3 if i % 3 == 0 else 0.0
        p, q = oracle.random_dist(rng, k, sp), oracle.random_dist(rng, k, sp)
        assert jsd_identity_residual(p, q) < 1e-12


def test_jsd_identity_residual_special_cases():
    p = [0.1, 0.2, 0.7]
    assert jsd_identity_residual(p, p) < 1e-15
    assert jsd_identity_residual([0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.3, 0.7]) < 1e-12
    assert value_at_optimal_d([0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.3, 0.7]) == 0.0


def test_kl_decomposition_matches_value():
    rng = np.random.default_rng(3)
    for _ in range(200):
        p, q = oracle.random_dist(rng, 6, 0.3), oracle.random_dist(rng, 6, 0.3)
        assert abs(kl_decomposition(p, q) - value_at_optimal_d(p, q)) < 1e-12


@settings(max_examples=200, deadline=None)
@given(dists(16))
def test_identity_and_bounds_property(pair):
    p, q = normalize(pair[0]), normalize(pair[1])
    assert jsd_identity_residual(p, q) < 1e-12
    assert jsd(p, q) == jsd(q, p)
    assert 0.0 <= jsd(p, q) <= math.log(2) + 1e-15
    assert value_at_optimal_d(p, q) >= -LOG4 - 1e-12
    d = optimal_discriminator(p, q)
    assert np.all((d >= 0) & (d <= 1))
    assert abs(value_at_optimal_d(p, p) + LOG4) <= 1e-15


@settings(max_examples=100, deadline=None)
@given(dists(8))
def test_matches_high_precision_reference(pair):
    p, q = normalize(pair[0]), normalize(pair[1])
    assert jsd(p, q) == pytest.approx(float(mp_jsd(p, q)), abs=1e-14)
    assert value_at_optimal_d(p, q) == pytest.approx(float(mp_h(p, q)), abs=1e-14)


def test_dstar_half_only_at_equality():
    rng = np.random.default_rng(8)
    for _ in range(100):
        p, q = oracle.random_dist(rng, 4), oracle.random_dist(rng, 4)
        assert np.max(np.abs(optimal_discriminator(p, p) - 0.5)) <= 1e-12
        assert np.max(np.abs(optimal_discriminator(p, q) - 0.5)) > 1e-12


def test_value_orders_pairs_like_jsd():
    rng = np.random.default_rng(9)
    p = oracle.random_dist(rng, 5)
    qs = [oracle.random_dist(rng, 5) for _ in range(200)]
    assert np.array_equal(
        np.argsort([value_at_optimal_d(p, q) for q in qs], kind="stable"), np.argsort([jsd(p, q) for q in qs], kind="stable")
    )


def test_scalar_maximizer_examples():
    assert scalar_maximizer(2.0, 2.0) == 0.5
    assert scalar_maximizer(0.3, 0.7) == pytest.approx(0.3)
    assert abs(grid_argmax(0.3, 0.7) - 0.3) <= 1e-5
    assert scalar_maximizer(1.3, 0.0) == 1.0
    assert grid_argmax(1.3, 0.0) == 1.0
    with pytest.raises(OracleError):
        scalar_maximizer(0.0, 0.0)


def test_scalar_maximizer_matches_grid_search():
    rng = np.random.default_rng(10)
    for m, n in rng.random((100, 2)) * 5:
        assert abs(scalar_maximizer(m, n) - grid_argmax(m, n)) <= 1e-5


@pytest.mark.parametrize("k,steps", [(2, 10), (3, 12), (4, 10)])
def test_simplex_grid_matches_product_enumeration(k, steps):
    brute = sorted(c for c in itertools.product(range(steps + 1), repeat=k) if sum(c) == steps)
    grid = simplex_grid(k, steps)
    assert np.array_equal(np.rint(grid * steps).astype(int), np.array(brute))


def test_brute_force_examples():
    res = brute_force_min_value([0.5, 0.5], 100)
    assert np.array_equal(res.argmin, [0.5, 0.5])
    assert res.value == pytest.approx(-LOG4, abs=1e-15)
    res = brute_force_min_value([0.7, 0.2, 0.1], 50)
    assert np.max(np.abs(res.argmin - [0.7, 0.2, 0.1])) <= 0.02
    res = brute_force_min_value([1.0, 0.0], 20)
    assert np.array_equal(res.argmin, [1.0, 0.0])


def test_brute_force_off_grid_target():
    p = np.array([0.123, 0.456, 0.421])
    res = brute_force_min_value(p, 100)
    assert np.max(np.abs(res.argmin - p)) <= 0.01
    assert -LOG4 - 1e-12 <= res.value <= -LOG4 + res.delta + 1e-12
    assert res.delta > 0


def test_brute_force_preconditions():
    with pytest.raises(OracleError):
        brute_force_min_value([0.2] * 5, 10)
    with pytest.raises(OracleError):
        brute_force_min_value([0.5, 0.5], 5)
