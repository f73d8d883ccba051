"""Wasserstein machinery: exactness, metric axioms, one-sided bounds."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvfbm.measure import (
    EmpiricalMeasure,
    MeasureHandle,
    coupling_bound,
    distance_to_dirac0,
    empirical_moment,
    wasserstein_1d,
)


def brute_force_w1d(x, y, q):
    """Minimum transport cost over all permutation couplings (exact for
    equal-weight empirical measures)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    best = np.inf
    for perm in itertools.permutations(range(len(y))):
        cost = np.mean(np.abs(x - y[list(perm)]) ** q)
        best = min(best, cost)
    return best ** (1.0 / q)


finite_floats = st.floats(min_value=-100.0, max_value=100.0, allow_nan=False)
small_samples = st.lists(finite_floats, min_size=1, max_size=32)


class TestWasserstein1d:
    def test_identical_measures(self):
        assert wasserstein_1d([0.0, 1.0], [0.0, 1.0], q=2) == 0.0

    def test_two_diracs(self):
        for q in (1.0, 2.0, 3.5):
            assert wasserstein_1d([0.0], [2.0], q=q) == pytest.approx(2.0)

    def test_order_counts_both_permutations(self):
        # {0,2} vs {1,1}: both couplings cost 1 at q=1
        assert wasserstein_1d([0.0, 2.0], [1.0, 1.0], q=1) == pytest.approx(1.0)
        assert brute_force_w1d([0.0, 2.0], [1.0, 1.0], 1.0) == pytest.approx(1.0)

    def test_rejects_unequal_counts(self):
        with pytest.raises(ValueError, match="unequal"):
            wasserstein_1d([0.0, 1.0], [0.0], q=2)

    def test_rejects_higher_dimension(self):
        with pytest.raises(ValueError, match="d = 1"):
            wasserstein_1d(np.zeros((3, 2)), np.ones((3, 2)), q=2)

    def test_rejects_bad_order(self):
        with pytest.raises(ValueError, match="q >= 1"):
            wasserstein_1d([0.0], [1.0], q=0.5)

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    def test_matches_brute_force(self, n):
        rng = np.random.default_rng(100 + n)
        for _ in range(50):
            x = rng.normal(size=n) * rng.uniform(0.1, 10)
            y = rng.normal(size=n) * rng.uniform(0.1, 10)
            q = rng.uniform(1.0, 4.0)
            assert wasserstein_1d(x, y, q) == pytest.approx(
                brute_force_w1d(x, y, q), abs=1e-12
            )

    @given(small_samples, small_samples)
    @settings(max_examples=100, deadline=None)
    def test_symmetry(self, xs, ys):
        n = min(len(xs), len(ys))
        x, y = xs[:n], ys[:n]
        assert wasserstein_1d(x, y, 2) == pytest.approx(wasserstein_1d(y, x, 2), abs=1e-9)

    @given(small_samples)
    @settings(max_examples=100, deadline=None)
    def test_identity_of_indiscernibles(self, xs):
        assert wasserstein_1d(xs, list(reversed(xs)), 2) == pytest.approx(0.0, abs=1e-9)

    @given(small_samples, small_samples, small_samples)
    @settings(max_examples=150, deadline=None)
    def test_triangle_inequality(self, xs, ys, zs):
        n = min(len(xs), len(ys), len(zs))
        x, y, z = xs[:n], ys[:n], zs[:n]
        d_xz = wasserstein_1d(x, z, 2)
        d_xy = wasserstein_1d(x, y, 2)
        d_yz = wasserstein_1d(y, z, 2)
        assert d_xz <= d_xy + d_yz + 1e-9

    @given(small_samples, small_samples, st.floats(1.0, 6.0), st.floats(0.0, 4.0))
    @settings(max_examples=150, deadline=None)
    def test_monotone_in_order(self, xs, ys, q, bump):
        # power-mean inequality on the matched sorted differences
        n = min(len(xs), len(ys))
        x, y = xs[:n], ys[:n]
        assert wasserstein_1d(x, y, q) <= wasserstein_1d(x, y, q + bump) * (1 + 1e-12) + 1e-12


class TestCouplingBound:
    def test_zero_for_equal_clouds(self):
        z = np.arange(6.0).reshape(3, 2)
        assert coupling_bound(z, z, q=2) == 0.0

    def test_identity_coupling_is_one_sided(self):
        # equal measures, crossed indexing: the bound is positive while W_q = 0
        z1 = np.array([[0.0], [2.0]])
        z2 = np.array([[2.0], [0.0]])
        assert coupling_bound(z1, z2, q=2) == pytest.approx(2.0)
        assert wasserstein_1d(z1, z2, 2) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            coupling_bound(np.zeros((3, 1)), np.zeros((4, 1)))

    def test_dominates_exact_distance(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = rng.integers(1, 20)
            x = rng.normal(size=(n, 1)) * rng.uniform(0.5, 5)
            y = rng.normal(size=(n, 1)) * rng.uniform(0.5, 5)
            q = rng.uniform(1.0, 4.0)
            assert coupling_bound(x, y, q) >= wasserstein_1d(x, y, q) - 1e-12


class TestDiracDistanceAndMoments:
    def test_zero_cloud(self):
        assert distance_to_dirac0(np.zeros((5, 1)), q=2) == 0.0

    def test_direct_value(self):
        assert distance_to_dirac0(np.array([[3.0], [4.0]]), q=2) == pytest.approx(
            np.sqrt(25.0 / 2.0)
        )

    def test_agrees_with_exact_1d_distance(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = rng.integers(1, 25)
            x = rng.normal(size=(n, 1)) * 3
            q = rng.uniform(1.0, 4.0)
            zeros = np.zeros((n, 1))
            assert distance_to_dirac0(x, q) == pytest.approx(
                wasserstein_1d(x, zeros, q), abs=1e-12
            )

    def test_moment_examples(self):
        assert empirical_moment(np.ones((3, 1)), p=4) == pytest.approx(1.0)
        assert empirical_moment(np.array([[0.0], [2.0]]), p=2) == pytest.approx(2.0)

    @given(small_samples, st.floats(1.0, 5.0))
    @settings(max_examples=100, deadline=None)
    def test_moment_is_dirac_distance_power(self, xs, p):
        mu = EmpiricalMeasure(np.asarray(xs))
        assert empirical_moment(mu, p) == pytest.approx(
            distance_to_dirac0(mu, p) ** p, rel=1e-9, abs=1e-12
        )


class TestEmpiricalMeasureType:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="finite"):
            EmpiricalMeasure(np.array([[np.inf]]))

    def test_promotes_1d(self):
        mu = EmpiricalMeasure(np.array([1.0, 2.0]))
        assert mu.samples.shape == (2, 1)
        assert mu.n == 2 and mu.d == 1


class TestMeasureHandle:
    def test_statistics_match_module_functions(self):
        rng = np.random.default_rng(3)
        samples = rng.normal(size=(40, 3))
        handle = MeasureHandle(samples)
        np.testing.assert_allclose(handle.mean(), samples.mean(axis=0), atol=1e-12)
        assert handle.moment(2.0) == pytest.approx(empirical_moment(samples, 2.0), abs=1e-12)
        assert handle.distance_to_dirac0(2.0) == pytest.approx(
            distance_to_dirac0(samples, 2.0), abs=1e-12
        )

    def test_permutation_invariance_is_exact(self):
        rng = np.random.default_rng(5)
        samples = rng.normal(size=(64, 2)) * 1e3
        perm = rng.permutation(64)
        a, b = MeasureHandle(samples), MeasureHandle(samples[perm])
        assert np.array_equal(a.mean(), b.mean())
        assert a.moment(3.0) == b.moment(3.0)
        assert a.distance_to_dirac0(2.0) == b.distance_to_dirac0(2.0)
