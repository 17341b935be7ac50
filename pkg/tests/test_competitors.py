import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lrtchange.competitors import (McusumConfig, calibrate_threshold, empirical_threshold,
                                   hotelling_days, hotelling_scan, mcusum_path, mcusum_scan,
                                   null_statistics, residuals_h0, statistic_batch)
from lrtchange.scan import ScanWindow
from lrtchange.simulate import SeedSpec, gen_null

W06 = ScanWindow(0, 6)
finite = st.floats(-50, 50)


class TestResiduals:
    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (3, 9), elements=finite))
    def test_rows_sum_to_zero(self, Y):
        np.testing.assert_allclose(residuals_h0(Y).sum(axis=1), 0.0, atol=1e-11)

    def test_constant(self):
        np.testing.assert_array_equal(residuals_h0(np.full((2, 5), 3.0)), 0.0)


class TestHotelling:
    def test_zero(self):
        assert hotelling_scan(np.zeros((3, 10)), W06).statistic == 0.0

    def test_hand_example(self):
        # residuals (-0.5, -0.5, -0.5, 1.5); day 4 is the first post-change day for offset 1
        res = hotelling_scan(np.array([[0.0, 0, 0, 2]]), ScanWindow(0, 1))
        assert res.per_day[0] == pytest.approx(2.25)
        assert res.statistic == pytest.approx(2.25)

    def test_window_days(self):
        Y = np.zeros((1, 10))
        Y[0, 7] = 10.0  # day 8 <=> offset 3
        per_day = hotelling_days(Y, ScanWindow(0, 4))
        assert int(np.argmax(per_day)) == 2

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (3, 12), elements=finite), arrays(np.float64, 3, elements=finite))
    def test_mean_shift_invariance(self, Y, c):
        a = hotelling_days(Y, W06)
        b = hotelling_days(Y + c[:, None], W06)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-8)


class TestMcusum:
    def test_zero_matrix(self):
        assert mcusum_scan(np.zeros((3, 10)), W06).statistic == 0.0

    def test_hand_trace(self):
        path = mcusum_path(np.array([[4.0, 0.0, 0.0]]), kappa=2.0)
        # C1 = 4 > 2 -> s1 = 4 (1 - 2/4) = 2; C2 = 2 <= 2 -> s2 = 0
        np.testing.assert_allclose(path, [4.0, 0.0, 0.0])

    def test_target_shifts_the_origin(self):
        path = mcusum_path(np.array([[3.0, 3.0]]), kappa=1.0, a_target=1.0)
        # v1 = 2 -> s1 = 1; v2 = 1 + 2 = 3 -> s2 = 2
        np.testing.assert_allclose(path, [1.0, 4.0])

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (2, 15), elements=st.floats(-5, 5)), st.floats(0.1, 4.0))
    def test_reset_rule(self, r, kappa):
        # after a day with C_j <= kappa the state is exactly zero
        s = np.zeros(2)
        path = mcusum_path(r, kappa)
        for j in range(r.shape[1]):
            v = s + r[:, j]
            c = float(np.linalg.norm(v))
            s = v * (1 - kappa / c) if c > kappa else np.zeros(2)
            if c <= kappa:
                assert path[j] == 0.0
            assert path[j] == pytest.approx(float(s @ s), rel=1e-9, abs=1e-12)

    def test_one_sided_sign_flip(self, seed):
        Y = gen_null(3, 20, seed)
        r = residuals_h0(Y)
        np.testing.assert_allclose(mcusum_path(residuals_h0(-Y), 2.0), mcusum_path(-r, 2.0))

    def test_two_sided_symmetric(self, seed):
        Y = gen_null(3, 20, seed)
        cfg = McusumConfig(2.0)
        assert mcusum_scan(Y, W06, cfg).statistic == pytest.approx(mcusum_scan(-Y, W06, cfg).statistic)

    def test_one_sided_symmetry_needs_zero_target(self, seed):
        Y = gen_null(3, 20, seed)
        zero = McusumConfig(1.0, 0.0, two_sided=False)
        np.testing.assert_allclose(mcusum_scan(Y, W06, zero).per_day, mcusum_scan(-Y, W06, zero).per_day)
        drift = McusumConfig(1.0, 0.5, two_sided=False)
        assert not np.allclose(mcusum_scan(Y, W06, drift).per_day, mcusum_scan(-Y, W06, drift).per_day)
        both = McusumConfig(1.0, 0.5)
        assert mcusum_scan(Y, W06, both).statistic == pytest.approx(mcusum_scan(-Y, W06, both).statistic)

    @pytest.mark.parametrize("kw", [dict(kappa=0.0), dict(kappa=-1.0), dict(a_target=-0.5)])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            McusumConfig(**kw)

    def test_batch_matches_single(self, seed):
        from lrtchange.simulate import null_batch
        Yb = null_batch(4, 30, seed, 0, 5)
        cfg = McusumConfig(2.0)
        np.testing.assert_allclose(statistic_batch("mcusum", Yb, W06, cfg),
                                   [mcusum_scan(Y, W06, cfg).statistic for Y in Yb])


class TestCalibration:
    def test_alpha_one_gives_minimum(self, seed):
        stats = null_statistics("hotelling", 3, 30, W06, None, 200, seed)
        assert calibrate_threshold("hotelling", 3, 30, W06, None, 1.0, 200, seed) == stats.min()

    def test_budget_check(self, seed):
        with pytest.raises(ValueError):
            calibrate_threshold("hotelling", 3, 30, W06, None, 0.05, 999, seed)

    def test_empirical_threshold_rule(self):
        s = np.arange(1.0, 101.0)
        t = empirical_threshold(s, 0.05)
        assert t == 95.0 and np.sum(s > t) == 5

    def test_monotone_in_alpha(self, seed):
        a = calibrate_threshold("mcusum", 5, 50, W06, McusumConfig(2.0), 0.01, 5000, seed)
        b = calibrate_threshold("mcusum", 5, 50, W06, McusumConfig(2.0), 0.05, 5000, seed)
        assert a >= b

    @pytest.mark.parametrize("method,cfg", [("hotelling", None), ("mcusum", McusumConfig(2.0))])
    def test_rejection_rate(self, method, cfg):
        q, n, alpha = 5, 50, 0.05
        thr = calibrate_threshold(method, q, n, W06, cfg, alpha, 200_000, SeedSpec(31, 1))
        fresh = null_statistics(method, q, n, W06, cfg, 100_000, SeedSpec(31, 2))
        rate = float(np.mean(fresh > thr))
        assert abs(rate - alpha) <= 3 * math.sqrt(alpha * (1 - alpha) / 1e5)
