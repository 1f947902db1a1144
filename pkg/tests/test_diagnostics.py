import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mjpgibbs.core import SufficientStats
from mjpgibbs.diagnostics import (
    ConstantTraceWarning,
    aggregate_stats,
    autocorrelation,
    average_relative_error,
    effective_sample_size,
    summarize,
)
from mjpgibbs.errors import DomainError, UndefinedMetricError


def ar1(rng, rho, n):
    x = np.empty(n)
    x[0] = rng.standard_normal() / np.sqrt(1 - rho**2)
    eps = rng.standard_normal(n)
    for i in range(1, n):
        x[i] = rho * x[i - 1] + eps[i]
    return x


class TestAre:
    def test_identical(self):
        s = SufficientStats(np.array([1.0, 2.0]), np.array([[0, 0.5], [0.25, 0]]))
        assert average_relative_error(s, s).value == 0.0

    def test_single_statistic(self):
        assert average_relative_error([1.0], [2.0]).value == 0.5

    def test_zero_truth_excluded(self):
        res = average_relative_error([1.0, 5.0, 3.0], [2.0, 0.0, 3.0])
        assert res.value == 0.5
        assert res.excluded == (1,)
        assert float(res) == 0.5

    def test_all_zero_truth(self):
        with pytest.raises(UndefinedMetricError):
            average_relative_error([1.0, 2.0], [0.0, 0.0])

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            average_relative_error([1.0, 2.0], [1.0])

    def test_hand_values(self):
        est = [0.9, 2.2, 3.0, 0.1]
        truth = [1.0, 2.0, 4.0, 0.2]
        assert average_relative_error(est, truth).value == pytest.approx(
            0.1 + 0.1 + 0.25 + 0.5, abs=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_recomputation(self, seed):
        rng = np.random.default_rng(seed)
        truth = rng.uniform(0.1, 5, 12) * (rng.random(12) < 0.8)
        truth[0] = 1.0
        est = truth + rng.normal(0, 0.3, 12)
        total = 0.0
        for e, t in zip(est, truth):
            if t != 0:
                total += abs(e - t) / t
        assert average_relative_error(est, truth).value == pytest.approx(total, abs=1e-12)

    @given(st.lists(st.floats(0.1, 10), min_size=3, max_size=3),
           st.lists(st.floats(0.1, 10), min_size=3, max_size=3),
           st.integers(0, 2), st.floats(0.01, 100))
    def test_rescaling_one_statistic(self, est, truth, j, c):
        e2, t2 = list(est), list(truth)
        e2[j] *= c
        t2[j] *= c
        assert average_relative_error(e2, t2).value == pytest.approx(
            average_relative_error(est, truth).value, rel=1e-9)

    def test_per_node_stats(self):
        a = [SufficientStats(np.array([1.0, 1.0]), np.zeros((2, 2)))] * 2
        b = [SufficientStats(np.array([2.0, 1.0]), np.zeros((2, 2)))] * 2
        res = average_relative_error(a, b)
        assert res.value == 1.0 and len(res.excluded) == 4


class TestEss:
    def test_iid(self, rng):
        ess = effective_sample_size(rng.standard_normal(10_000))
        assert 8500 <= ess <= 11_000

    def test_ar1(self, rng):
        n, rho = 100_000, 0.9
        ess = effective_sample_size(ar1(rng, rho, n))
        target = n * (1 - rho) / (1 + rho)
        assert abs(ess - target) < 0.2 * target

    def test_constant_trace(self):
        with pytest.warns(ConstantTraceWarning):
            assert effective_sample_size(np.full(50, 3.0)) == 50

    def test_too_short(self):
        with pytest.raises(DomainError):
            effective_sample_size(np.arange(9.0))

    def test_clamped(self, rng):
        # alternating trace: negative lag-1 correlation
        x = np.tile([1.0, -1.0], 500) + 0.01 * rng.standard_normal(1000)
        ess = effective_sample_size(x)
        assert 0 < ess <= 1000

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 1000), st.floats(-50, 50).filter(lambda a: abs(a) > 1e-3),
           st.floats(-100, 100))
    def test_affine_invariance(self, seed, a, b):
        x = ar1(np.random.default_rng(seed), 0.5, 500)
        assert effective_sample_size(a * x + b) == pytest.approx(effective_sample_size(x),
                                                                 rel=1e-6)

    def test_autocorrelation_lag0(self, rng):
        r = autocorrelation(rng.standard_normal(100))
        assert r[0] == pytest.approx(1.0)
        assert r.size == 100


class TestAggregate:
    def s(self, d0, d1, c):
        return SufficientStats(np.array([d0, d1]), np.array([[0.0, c], [0.0, 0.0]]))

    def test_single(self):
        mean, traces = aggregate_stats([self.s(1.0, 2.0, 3.0)])
        np.testing.assert_array_equal(mean.to_vector(), [1, 2, 3, 0])
        assert set(traces) == {"dwell_0", "dwell_1", "n_0_1", "n_1_0"}

    def test_midpoint(self):
        mean, _ = aggregate_stats([self.s(1.0, 2.0, 3.0), self.s(2.0, 1.0, 1.0)])
        np.testing.assert_array_equal(mean.to_vector(), [1.5, 1.5, 2.0, 0.0])

    def test_dwell_sum_preserved(self, rng):
        samples = []
        for _ in range(30):
            d = rng.random()
            samples.append(self.s(3 * d, 3 * (1 - d), rng.integers(5)))
        mean, _ = aggregate_stats(samples)
        assert mean.dwell.sum() == pytest.approx(3.0)

    def test_empty(self):
        with pytest.raises(DomainError):
            aggregate_stats([])

    @given(st.permutations(list(range(6))))
    def test_permutation_invariance(self, order):
        samples = [self.s(i, 6 - i, i % 3) for i in range(6)]
        a, _ = aggregate_stats(samples)
        b, _ = aggregate_stats([samples[i] for i in order])
        np.testing.assert_allclose(a.to_vector(), b.to_vector(), atol=1e-12)

    def test_per_node(self):
        sample = [self.s(1.0, 2.0, 3.0), self.s(0.5, 2.5, 1.0)]
        mean, traces = aggregate_stats([sample, sample])
        assert len(mean) == 2
        assert "node1.n_0_1" in traces

    def test_summarize(self, rng):
        samples = [self.s(d, 1 - d, 0.0) for d in rng.random(50)]
        truth = self.s(0.5, 0.5, 0.0)
        out = summarize(samples, truth)
        assert out["n_samples"] == 50
        assert out["excluded"] == [2, 3]
        assert "ess" in out["statistics"]["dwell_0"]
        assert out["statistics"]["dwell_0"]["truth"] == 0.5
