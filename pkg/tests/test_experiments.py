import csv
import io

import numpy as np
import pytest

from lrtchange.experiments import (COLUMNS, ExperimentConfig, resolve_window, run_experiment,
                                   sqrt_window)
from lrtchange.scan import ScanWindow


def small(experiment, **kw):
    base = dict(table1=dict(qs=(5,), ns=(30,), windows=((0, 6),), replicates=600, cov_B=2000),
                fig1=dict(m1s=(3,), p_targets=(0.05,), B_grid=(50, 100), replicates=40, ref_B=20_000),
                fig2=dict(qs=(10,), kappas=(2.0,), offsets=(1, 6), replicates=300, calib_B=2000,
                          cov_B=2000))[experiment]
    base.update(kw)
    return ExperimentConfig(experiment, **base)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestConfig:
    def test_defaults(self):
        assert ExperimentConfig("table1").replicates == 10_000
        assert ExperimentConfig("fig1").replicates == 1000
        assert ExperimentConfig("fig2").replicates == 1000

    @pytest.mark.parametrize("kw", [
        dict(experiment="table2"),
        dict(experiment="table1", qs=(7,)),
        dict(experiment="table1", ns=(50,)),
        dict(experiment="table1", windows=((1, 6),)),
        dict(experiment="fig1", p_targets=(0.01,)),
        dict(experiment="fig1", m1s=(4,)),
        dict(experiment="fig2", qs=(5,)),
        dict(experiment="fig2", kappas=(1.0,)),
        dict(experiment="fig2", offsets=(7,)),
        dict(experiment="table1", replicates=0),
    ])
    def test_invalid_grid(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)

    @pytest.mark.parametrize("n,window", [(30, (3, 5)), (100, (5, 10)), (365, (10, 19)), (1000, (16, 32))])
    def test_sqrt_window(self, n, window):
        assert sqrt_window(n) == ScanWindow(*window)
        assert resolve_window("sqrt", n) == ScanWindow(*window)


@pytest.mark.parametrize("experiment", ["table1", "fig1", "fig2"])
def test_byte_identical_across_workers(experiment, tmp_path):
    outs = []
    for workers in (1, 2, 3):
        cfg = small(experiment, workers=workers, output_path=str(tmp_path / f"{experiment}_{workers}.csv"))
        outs.append(run_experiment(cfg))
        assert (tmp_path / f"{experiment}_{workers}.csv").read_text() == outs[-1]
    assert outs[0] == outs[1] == outs[2]
    manifests = set()
    for w in (1, 2, 3):
        lines = (tmp_path / f"{experiment}_{w}.csv.manifest").read_text().splitlines()
        manifests.add(tuple(ln for ln in lines if not ln.startswith("output_path=")))
    assert len(manifests) == 1


def test_seed_changes_output():
    assert run_experiment(small("table1")) != run_experiment(small("table1", master_seed=1))


def test_table1_output_format(tmp_path):
    cfg = small("table1", output_path=str(tmp_path / "t1.csv"))
    out = rows(run_experiment(cfg))
    assert list(out[0].keys()) == COLUMNS
    assert [r["method"] for r in out] == ["asymptotic", "approx_sigma", "empirical_sigma"]
    for r in out:
        p, se = float(r["estimate"]), float(r["std_error"])
        assert 0 <= p <= 1
        assert se == pytest.approx(np.sqrt(p * (1 - p) / 600), abs=1e-6)
        assert r["replicates"] == "600" and r["m_star"] == "6"
    assert "m0_used=1" in out[0]["setting"]
    manifest = (tmp_path / "t1.csv.manifest").read_text()
    assert "asymptotic_m0_clamp=" in manifest and "sqrt_window_rounding=" in manifest
    assert "master_seed=20180501" in manifest


def test_fig1_granularity_and_columns():
    cfg = small("fig1", p_targets=(0.001,), B_grid=(100,), replicates=20, ref_B=50_000)
    out = rows(run_experiment(cfg))
    acc = {r["method"]: float(r["estimate"]) for r in out}
    assert acc["p_tilde"] == 0.0
    assert 0.0 <= acc["p_hat"] <= 1.0


def test_fig2_rows():
    out = rows(run_experiment(small("fig2")))
    methods = {r["method"] for r in out}
    assert methods == {"lrt", "mcusum_k2", "hotelling"}
    assert {r["setting"].split(";")[0] for r in out} == {"k=n-1", "k=n-6"}
