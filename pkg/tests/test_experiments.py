import csv
import json

import numpy as np
import pytest

from mjpgibbs.ctbn import sample_ctbn_prior
from mjpgibbs.errors import BudgetExceededError, ConfigError
from mjpgibbs.experiments import (
    LotkaVolterraSpec,
    build_chain_ctbn,
    build_lotka_volterra,
    fit_loglog_slope,
    lv_noise_likelihood,
    lv_noise_table,
    run_chain_experiment,
    run_experiment,
    run_lv_experiment,
    run_scaling_study,
    validate_config,
)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestLotkaVolterra:
    spec = LotkaVolterraSpec(cap=8, alpha=0.3, beta=0.05, gamma=0.3, delta=0.05,
                             t_end=10.0, obs_times=(2.0, 4.0, 6.0), initial=(4, 4))

    def test_generators_tridiagonal(self):
        model = build_lotka_volterra(self.spec, sparse=False)
        for node in model.generators:
            for g in node:
                M = g.matrix
                i, j = np.nonzero(M - np.diag(np.diag(M)))
                assert np.all(np.abs(i - j) == 1)

    def test_rates(self):
        s = self.spec
        model = build_lotka_volterra(s, sparse=False)
        prey_y0 = model.generators[0][0]
        # no predators: prey cannot die
        assert np.all(np.diag(prey_y0.matrix, -1) == 0)
        assert prey_y0.rate(3, 4) == pytest.approx(s.alpha * 3)
        assert model.generators[0][2].rate(3, 2) == pytest.approx(s.beta * 3 * 2)
        pred = model.generators[1][5]
        assert pred.rate(2, 3) == pytest.approx(s.delta * 5 * 2)
        assert pred.rate(2, 1) == pytest.approx(s.gamma * 2)
        # no births at the cap
        for node in model.generators:
            for g in node:
                assert g.leave_rates[s.cap] == pytest.approx(g.rate(s.cap, s.cap - 1))

    def test_sparse_and_dense_agree(self):
        a = build_lotka_volterra(self.spec, sparse=True)
        b = build_lotka_volterra(self.spec, sparse=False)
        assert a.is_sparse and not b.is_sparse
        np.testing.assert_array_equal(a.generators[1][3].matrix, b.generators[1][3].matrix)

    def test_noise_likelihood(self):
        assert lv_noise_likelihood(5, 5) == pytest.approx(1 / (1 + 1e-6))
        assert lv_noise_likelihood(2, 5) == pytest.approx(1 / (8 + 1e-6))
        vals = [lv_noise_likelihood(5 + d, 5) for d in range(6)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_noise_table_normalized(self):
        table, norm = lv_noise_table(10)
        np.testing.assert_allclose(table.sum(axis=0), 1.0)
        assert lv_noise_likelihood(3, 4, cap=10) == pytest.approx(table[3, 4])
        assert norm[4] * table[3, 4] == pytest.approx(lv_noise_likelihood(3, 4))

    @pytest.mark.parametrize("kw", [dict(cap=0), dict(alpha=-1.0), dict(t_end=-1.0),
                                    dict(obs_times=(700.0,)), dict(initial=(31, 0))])
    def test_spec_validation(self, kw):
        with pytest.raises(ConfigError):
            LotkaVolterraSpec(**kw)

    def test_full_scale(self):
        s = LotkaVolterraSpec.full_scale()
        assert s.cap == 200 and s.t_end == 3000.0 and s.obs_times[-1] == 1500.0

    def test_prior_paths_stay_in_range(self, rng):
        model = build_lotka_volterra(self.spec)
        for _ in range(20):
            path = sample_ctbn_prior(model, (0, 10), rng, initial_states=(4, 4))
            for p in path:
                assert p.states.min() >= 0 and p.states.max() <= self.spec.cap
                assert np.all(np.abs(np.diff(p.states)) == 1)

    def test_run_writes_outputs(self, tmp_path):
        res = run_lv_experiment(self.spec, {"iterations": 60, "burn_in": 10, "grid_points": 21},
                                tmp_path)
        assert res["mean"].shape == (2, 21)
        assert np.all(res["lower"] <= res["upper"])
        assert 0.0 <= res["coverage"] <= 1.0
        rows = read_csv(tmp_path / "posterior_band.csv")
        assert len(rows) == 21 and "prey_q05" in rows[0]
        assert json.loads((tmp_path / "diagnostics.json").read_text())["band_level"] == 0.9

    def test_no_observations_recovers_prior(self):
        # without data the band at t_start is the known initial state and later widens
        res = run_lv_experiment(self.spec, {"iterations": 300, "burn_in": 20, "grid_points": 11,
                                            "observations": False})
        assert res["lower"][0, 0] == res["upper"][0, 0] == 4
        assert res["upper"][0, -1] - res["lower"][0, -1] >= 1

    def test_budget(self):
        with pytest.raises(BudgetExceededError):
            run_lv_experiment(self.spec, {"iterations": 10_000, "burn_in": 0,
                                          "budget_seconds": 0.05})

    def test_bad_settings(self):
        with pytest.raises(ConfigError):
            run_lv_experiment(self.spec, {"iterations": 10, "burn_in": 10})


class TestChain:
    def test_single_node(self):
        model = build_chain_ctbn(1, 3, seed=0)
        assert model.m == 1 and model.parents == ((),)

    def test_structure(self):
        model = build_chain_ctbn(4, 2, seed=1)
        assert model.parents == ((), (0,), (1,), (2,))
        for node in model.generators[1:]:
            assert len(node) == 2
        off = model.generators[2][1].off_diagonal
        assert np.all((off[~np.eye(2, dtype=bool)] >= 0.5) & (off[~np.eye(2, dtype=bool)] <= 2))

    def test_deterministic(self, tmp_path):
        from mjpgibbs.io import save_ctbn_model
        save_ctbn_model(tmp_path / "a.json", build_chain_ctbn(3, 3, seed=7))
        save_ctbn_model(tmp_path / "b.json", build_chain_ctbn(3, 3, seed=7))
        save_ctbn_model(tmp_path / "c.json", build_chain_ctbn(3, 3, seed=8))
        a, b, c = ((tmp_path / f).read_bytes() for f in ("a.json", "b.json", "c.json"))
        assert a == b and a != c

    @pytest.mark.parametrize("m,n", [(0, 3), (2, 1)])
    def test_invalid(self, m, n):
        with pytest.raises(ConfigError):
            build_chain_ctbn(m, n)

    def test_smoke(self, tmp_path):
        res = run_chain_experiment({"nodes": 2, "states": 2, "t_end": 2.0, "chains": 3,
                                    "sample_counts": [20, 80], "burn_in": 10,
                                    "oracle_step": 1e-2}, tmp_path)
        assert res["are"].shape == (3, 2)
        assert np.all(np.isfinite(res["median"]))
        for name in ("results.csv", "posterior_band.csv", "per_chain_are.csv",
                     "diagnostics.json", "model.json"):
            assert (tmp_path / name).exists()


class TestScaling:
    def test_slope_fit(self):
        x = np.array([1, 2, 4, 8.0])
        assert fit_loglog_slope(x, 3 * x ** 2) == pytest.approx(2.0)

    @pytest.mark.parametrize("axis,levels", [("states", [4, 8]), ("states-sparse", [8, 16]),
                                             ("chain-length", [1, 2]), ("interval", [5, 10])])
    def test_axes_run(self, tmp_path, axis, levels):
        res = run_scaling_study(axis, levels, {"iterations": 12, "burn_in": 1, "states": 8,
                                               "t_end": 5.0, "rounds": 2}, tmp_path)
        assert [r.level for r in res["rows"]] == levels
        assert all(r.iterations == 12 for r in res["rows"])
        assert np.isfinite(res["slope"])
        assert len(read_csv(tmp_path / "results.csv")) == 2

    def test_grid_grows_with_interval(self):
        res = run_scaling_study("interval", [5, 40], {"iterations": 30, "states": 4})
        small, big = res["rows"]
        assert big.mean_grid_size > 4 * small.mean_grid_size

    def test_target_ess_mode(self):
        res = run_scaling_study("states", [3], {"target_ess": 5, "batch": 20,
                                                "max_iterations": 200, "t_end": 5.0})
        row = res["rows"][0]
        assert np.isnan(res["slope"])
        assert row.iterations <= 200 and (row.ess >= 5 or row.iterations == 200)

    def test_unknown_axis(self):
        with pytest.raises(ConfigError):
            run_scaling_study("colour", [1], {})


class TestConfig:
    def test_valid(self):
        validate_config({"experiment": "scaling", "model": {"axis": "states", "levels": [2, 4]},
                         "sampler": {"iterations": 5}})

    @pytest.mark.parametrize("config", [
        {"experiment": "bogus"},
        {"experiment": "lv", "extra": 1},
        {"experiment": "lv", "model": {"cap": 0}},
        {"experiment": "lv", "model": {"colour": "red"}},
        {"experiment": "chain", "sampler": {"iterations": 0}},
        {"experiment": "chain", "sampler": {"omega_multiplier": 1.0}},
        {"experiment": "scaling"},
        {"experiment": "scaling", "model": {"axis": "states", "levels": []}},
    ])
    def test_invalid(self, config):
        with pytest.raises(ConfigError):
            validate_config(config)

    def test_full_preset(self):
        from mjpgibbs.experiments import lv_spec_from_config
        assert lv_spec_from_config({"preset": "full"}).cap == 200
        assert lv_spec_from_config({"preset": "full", "cap": 50}).cap == 50

    @pytest.mark.parametrize("name", ["lv_desk", "lv_full", "chain", "scaling_states",
                                      "scaling_sparse", "scaling_chain", "scaling_interval"])
    def test_shipped_configs(self, name):
        from pathlib import Path
        from mjpgibbs.experiments import load_config
        load_config(Path(__file__).parent.parent / "configs" / f"{name}.json")

    def test_run_experiment_manifest(self, tmp_path):
        config = {"experiment": "lv",
                  "model": {"cap": 6, "alpha": 0.3, "beta": 0.05, "gamma": 0.3, "delta": 0.05,
                            "t_end": 5.0, "obs_times": [1.0, 2.0], "initial": [3, 3]},
                  "sampler": {"iterations": 30, "burn_in": 5, "grid_points": 6}}
        run_experiment(config, tmp_path, seed=4)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["seed"] == 4 and manifest["config"] == config
        assert "posterior_band.csv" in manifest["outputs"]
        assert 0 <= manifest["summary"]["coverage_observed_region"] <= 1

    def test_same_seed_same_band(self, tmp_path):
        config = {"experiment": "lv",
                  "model": {"cap": 6, "alpha": 0.3, "beta": 0.05, "gamma": 0.3, "delta": 0.05,
                            "t_end": 5.0, "obs_times": [1.0], "initial": [3, 3]},
                  "sampler": {"iterations": 20, "burn_in": 2, "grid_points": 5}}
        run_experiment(config, tmp_path / "a", seed=1)
        run_experiment(config, tmp_path / "b", seed=1)
        assert ((tmp_path / "a" / "posterior_band.csv").read_bytes()
                == (tmp_path / "b" / "posterior_band.csv").read_bytes())
