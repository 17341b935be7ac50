import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrtchange.nullcov import (CovarianceModel, correlation_from_samples, null_scan_star,
                               repair_psd, sigma_empirical, sigma_first_order)
from lrtchange.scan import ScanWindow, null_scan_z
from lrtchange.simulate import SeedSpec

W06 = ScanWindow(0, 6)


class TestFirstOrder:
    def test_entry(self):
        s = sigma_first_order(100, ScanWindow(0, 5)).sigma
        # j1 = 95 (offset 5), j2 = 99 (offset 1)
        assert s[0, 4] == pytest.approx(0.2)
        np.testing.assert_array_equal(np.diag(s), 1.0)

    def test_product_structure(self):
        # (n-j2)/(n-j1) composes multiplicatively along the chain
        s = sigma_first_order(50, ScanWindow(2, 9)).sigma
        m = s.shape[0]
        for i in range(m):
            for j in range(i + 1, m):
                for k in range(j + 1, m):
                    assert s[i, k] == pytest.approx(s[i, j] * s[j, k])

    def test_positive_definite(self):
        assert np.linalg.eigvalsh(sigma_first_order(1000, ScanWindow(16, 32)).sigma).min() > 0


class TestEmpirical:
    def test_structure_and_determinism(self, seed):
        a = sigma_empirical(5, 100, W06, 2000, seed)
        b = sigma_empirical(5, 100, W06, 2000, seed)
        assert a.sigma.tobytes() == b.sigma.tobytes()
        np.testing.assert_array_equal(np.diag(a.sigma), 1.0)
        np.testing.assert_array_equal(a.sigma, a.sigma.T)
        assert np.linalg.eigvalsh(a.sigma).min() >= 1e-10
        assert a.provenance == "empirical" and a.details["B"] == 2000

    def test_budget_too_small(self, seed):
        with pytest.raises(ValueError):
            sigma_empirical(5, 100, W06, 6, seed)

    def test_z_correlation_matches_first_order(self, seed):
        # the first-order formula approximates cor(Z); checked at B = 1e5
        z = null_scan_z(5, 100, W06, seed, 0, 100_000)
        emp = correlation_from_samples(z)
        fo = sigma_first_order(100, W06).sigma
        assert np.abs(emp - fo).max() < 0.02

    @pytest.mark.xfail(strict=True, reason="cor(Z*) sits up to ~0.04 below the first-order "
                       "value at q=5, n=100; see the decisions ledger")
    def test_z_star_correlation_within_002_of_first_order(self, seed):
        emp = sigma_empirical(5, 100, W06, 100_000, seed).sigma
        fo = sigma_first_order(100, W06).sigma
        assert np.abs(emp - fo).max() < 0.02

    def test_z_star_correlation_below_first_order(self, seed):
        emp = sigma_empirical(5, 100, W06, 100_000, seed).sigma
        fo = sigma_first_order(100, W06).sigma
        iu = np.triu_indices(6, 1)
        assert np.all(emp[iu] < fo[iu])
        assert np.abs(emp - fo).max() < 0.05

    def test_distance_shrinks_with_budget(self):
        fo = sigma_first_order(100, W06).sigma
        means = []
        for B in (1_000, 10_000, 100_000):
            dist = [np.abs(sigma_empirical(5, 100, W06, B, SeedSpec(500 + s, B)).sigma - fo).max()
                    for s in range(20)]
            means.append(np.mean(dist))
        assert means[0] >= means[1] >= means[2]

    def test_star_sampler_is_normal_score_of_z(self, seed):
        from lrtchange.specfun import chisq_to_normal
        z = null_scan_z(3, 40, W06, seed, 100, 50)
        np.testing.assert_allclose(null_scan_star(3, 40, W06, seed, 50, start=100),
                                   chisq_to_normal(z, 3))


class TestRepair:
    def test_untouched_when_valid(self):
        s = sigma_first_order(30, W06).sigma
        out, repaired = repair_psd(s)
        assert not repaired
        np.testing.assert_array_equal(out, s)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(3, 8), st.integers(0, 10_000))
    def test_repairs_indefinite(self, m, s):
        rng = np.random.default_rng(s)
        a = rng.uniform(-1, 1, size=(m, m))
        a = 0.5 * (a + a.T)
        np.fill_diagonal(a, 1.0)
        out, _ = repair_psd(a)
        np.testing.assert_allclose(np.diag(out), 1.0, atol=1e-12)
        np.testing.assert_allclose(out, out.T)
        assert np.linalg.eigvalsh(out).min() >= 1e-10 * (1 - 1e-4)

    def test_rank_deficient_samples(self):
        x = np.random.default_rng(1).normal(size=(50, 2))
        x = np.column_stack([x, x[:, 0] + x[:, 1]])
        out, repaired = repair_psd(correlation_from_samples(x))
        assert repaired and np.linalg.eigvalsh(out).min() >= 1e-10 * (1 - 1e-4)


def test_csv_roundtrip(tmp_path, seed):
    model = sigma_empirical(5, 60, ScanWindow(1, 5), 1000, seed)
    path = tmp_path / "sigma.csv"
    model.to_csv(path)
    back = CovarianceModel.from_csv(path)
    np.testing.assert_allclose(back.sigma, model.sigma, rtol=0, atol=1e-15)
    assert back.window == model.window and back.n == 60 and back.q == 5
    assert back.provenance == "empirical"
    header = path.read_text().splitlines()[1]
    assert header.split(",") == ["1", "2", "3", "4", "5"]
