import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from sgdinfer.errors import DegenerateCovarianceError, NoAcceptedReplicasError
from sgdinfer.inference import (
    ConfidenceInterval,
    bootstrap_ci,
    cov_ci,
    empirical_quantile_inverse,
    normal_quantile,
    oracle_ci,
)


def brute_quantile(values, q):
    """inf over candidate points x of {x : #(v <= x)/K >= q}."""
    K = len(values)
    return min(x for x in values if sum(v <= x for v in values) / K >= q)


def phi_upper(z):
    return float(mpmath.erfc(mpmath.mpf(z) / mpmath.sqrt(2)) / 2)


class TestNormalQuantile:
    def test_median(self):
        assert normal_quantile(0.5) == 0.0

    def test_two_sided_five_percent(self):
        assert normal_quantile(0.025) == pytest.approx(1.95996, abs=1e-5)

    def test_ten_percent(self):
        # bisection root of Phi(z) = 0.9 in 40-digit arithmetic
        assert normal_quantile(0.1) == pytest.approx(1.2815515655446004, abs=1e-12)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_domain(self, p):
        with pytest.raises(ValueError):
            normal_quantile(p)

    @settings(max_examples=200, deadline=None)
    @given(p=st.floats(1e-8, 1 - 1e-8))
    def test_inverts_cdf(self, p):
        assert abs(phi_upper(normal_quantile(p)) - p) <= 1e-9


class TestCovCi:
    def test_zero_covariance(self):
        ci = cov_ci(np.array([1.0, 2.0]), np.array([0.5, 0.25]), np.zeros((2, 2)), 100)
        assert ci.lower == ci.upper == 1.0

    def test_scalar(self):
        ci = cov_ci(np.ones(1), np.zeros(1), np.eye(1), 100, 0.05)
        z = normal_quantile(0.025)
        assert ci.lower == pytest.approx(-z / 10, rel=1e-15)
        assert ci.upper == pytest.approx(z / 10, rel=1e-15)
        assert ci.upper == pytest.approx(0.196, abs=1e-4)

    def test_quadratic_form(self):
        ci = cov_ci(np.ones(2), np.zeros(2), np.eye(2), 4, 0.05)
        half = normal_quantile(0.025) * math.sqrt(2 / 4)
        assert (ci.lower, ci.upper) == pytest.approx((-half, half), rel=1e-15)
        assert ci.method == "Cov" and ci.level == pytest.approx(0.95)

    def test_tiny_negative_clamped(self):
        sig = np.array([[1.0, 1.0], [1.0, 1.0 - 1e-15]])
        ci = cov_ci(np.array([1.0, -1.0]), np.zeros(2), sig, 10)
        assert ci.width == 0.0

    def test_negative_rejected(self):
        with pytest.raises(DegenerateCovarianceError):
            cov_ci(np.ones(1), np.zeros(1), -np.eye(1), 10)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_sign_flip_and_containment(self, seed):
        rng = np.random.default_rng(seed)
        L = rng.standard_normal((3, 3))
        sig = L @ L.T
        a = rng.standard_normal(3)
        tb = rng.standard_normal(3)
        ci = cov_ci(a, tb, sig, 50)
        flipped = cov_ci(-a, tb, sig, 50)
        assert ci.contains(a @ tb)
        assert ci.width == pytest.approx(flipped.width, rel=1e-12)


class TestOracleCi:
    def test_same_as_cov(self):
        sig = np.array([[2.0, 0.3], [0.3, 1.0]])
        a, tb = np.array([1.0, 0.5]), np.array([0.2, -0.4])
        c = cov_ci(a, tb, sig, 77)
        o = oracle_ci(a, tb, sig, 77)
        assert (c.lower, c.upper) == (o.lower, o.upper)
        assert o.method == "Oracle" and o.accepted_count == 0

    def test_scalar(self):
        ci = oracle_ci(np.ones(1), np.array([3.0]), 4 * np.eye(1), 400)
        half = normal_quantile(0.025) * 2 / 20
        assert (ci.lower, ci.upper) == pytest.approx((3 - half, 3 + half), rel=1e-15)

    def test_zero(self):
        ci = oracle_ci(np.ones(2), np.ones(2), np.zeros((2, 2)), 9)
        assert ci.width == 0


class TestEmpiricalQuantile:
    def test_order_statistic(self):
        assert empirical_quantile_inverse([4, 1, 3, 2], 0.5) == 2

    @pytest.mark.parametrize("q", [0.01, 0.5, 0.99])
    def test_singleton(self, q):
        assert empirical_quantile_inverse([7.0], q) == 7.0

    def test_empty(self):
        with pytest.raises(NoAcceptedReplicasError):
            empirical_quantile_inverse([], 0.5)

    def test_uniform_sample(self):
        v = np.random.default_rng(3).random(1000)
        assert abs(empirical_quantile_inverse(v, 0.975) - 0.975) < 0.02

    def test_exact_grid_levels(self):
        # q K lands on an integer up to rounding
        vals = list(range(1, 201))
        assert empirical_quantile_inverse(vals, 0.975) == 195
        assert empirical_quantile_inverse(vals, 0.025) == 5
        vals = list(range(1, 41))
        assert empirical_quantile_inverse(vals, 0.975) == 39
        assert empirical_quantile_inverse(vals, 0.1 + 0.2) == brute_quantile(vals, 0.1 + 0.2)

    @settings(max_examples=300, deadline=None)
    @given(
        values=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=60),
        q=st.floats(0.001, 0.999),
    )
    def test_matches_brute_force(self, values, q):
        assert empirical_quantile_inverse(values, q) == brute_quantile(values, q)

    @settings(max_examples=100, deadline=None)
    @given(values=st.lists(st.integers(-50, 50), min_size=1, max_size=40),
           q1=st.floats(0.001, 0.999), q2=st.floats(0.001, 0.999))
    def test_monotone(self, values, q1, q2):
        lo, hi = sorted((q1, q2))
        assert empirical_quantile_inverse(values, lo) <= empirical_quantile_inverse(values, hi)


class TestBootstrapCi:
    def test_zero_projections(self):
        ci = bootstrap_ci(np.ones(2), np.array([1.0, 2.0]), np.zeros(10), 100)
        assert ci.lower == ci.upper == 3.0

    def test_two_point(self):
        ci = bootstrap_ci(np.ones(1), np.array([0.5]), [1.96, -1.96], 1, q=0.5)
        assert (ci.lower, ci.upper) == (0.5 - 1.96, 0.5 + 1.96)
        assert ci.accepted_count == 2

    def test_root_n_scaling(self, rng):
        proj = rng.standard_normal(200)
        w1 = bootstrap_ci(np.ones(1), np.zeros(1), proj, 100).width
        w4 = bootstrap_ci(np.ones(1), np.zeros(1), proj, 400).width
        assert w1 / w4 == pytest.approx(2.0, rel=1e-12)

    def test_empty(self):
        with pytest.raises(NoAcceptedReplicasError):
            bootstrap_ci(np.ones(1), np.zeros(1), [], 10)

    def test_orientation(self):
        # lower endpoint uses the lower quantile, not its negation
        proj = np.arange(-10.0, 30.0)  # skewed to the right
        ci = bootstrap_ci(np.ones(1), np.zeros(1), proj, 1, q=0.1)
        assert ci.lower == empirical_quantile_inverse(proj, 0.05)
        assert ci.upper == empirical_quantile_inverse(proj, 0.95)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), K=st.integers(2, 300))
    def test_reflection_and_containment(self, seed, K):
        rng = np.random.default_rng(seed)
        half = rng.standard_normal(K)
        proj = np.concatenate([half, -half])  # symmetric about zero
        # the ceil-indexed order statistics are mirror images iff q K / 2 is fractional
        assume((0.025 * 2 * K) % 1 != 0)
        a = np.array([1.0, -2.0])
        tb = rng.standard_normal(2)
        ci = bootstrap_ci(a, tb, proj, 25)
        ref = bootstrap_ci(-a, tb, -proj, 25)
        c = a @ tb
        assert ci.contains(c)
        # reflection about the centre maps one interval onto the other
        assert ref.lower == pytest.approx(-c - (ci.upper - c), abs=1e-12)
        assert ref.upper == pytest.approx(-c + (c - ci.lower), abs=1e-12)


def test_interval_invariant():
    with pytest.raises(ValueError):
        ConfidenceInterval(1.0, 0.0, "Cov", 0.95)
    with pytest.raises(ValueError):
        ConfidenceInterval(0.0, 1.0, "t", 0.95)
