import csv
import io

import numpy as np
import pytest

from aquarl import experiment, qlearn
from aquarl.errors import ConfigError
from aquarl.experiment import ExperimentConfig, SweepSpec

# small enough that a run takes a fraction of a second
FAST = ExperimentConfig(mode="cage", horizon=28, max_episodes=60, stop_patience=0)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert (cfg.dw, cfg.dt, cfg.reward, cfg.lam) == (10.0, 7, "L2", 0.5)
        assert (cfg.alpha, cfg.gamma, cfg.epsilon0) == (0.1, 0.8, 0.9)
        assert cfg.train_config().max_episodes == 30000
        assert cfg.with_overrides(mode="cage").train_config().max_episodes == 15000

    def test_string_overrides_and_params(self):
        cfg = ExperimentConfig().with_overrides(dw="15", reward="L1", rho="1.5", w0="none")
        assert cfg.dw == 15.0 and cfg.reward == "L1" and cfg.params.rho == 1.5 and cfg.w0 is None

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_mapping({"nonsense": 1})

    @pytest.mark.parametrize("key,value", [("mode", "pond"), ("reward", "L3"), ("dw", "-1"),
                                           ("gamma", "2"), ("dt", "abc"), ("ref_feed", "1.5")])
    def test_validation(self, key, value):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_mapping({key: value})

    def test_file_round_trip(self, tmp_path):
        cfg = ExperimentConfig(mode="cage", dw=15.0, seeds=(3, 4)).with_overrides(rho="1.2")
        path = tmp_path / "c.txt"
        with open(path, "w") as fh:
            cfg.write(fh)
        assert ExperimentConfig.from_file(path) == cfg

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(tmp_path / "missing.file")

    def test_user_reference(self, tmp_path):
        ref = tmp_path / "ref.csv"
        ref.write_text("day,weight_g\n0,6\n60,80\n120,300\n")
        env = ExperimentConfig(reference=str(ref)).build_env()
        assert env.reference.at(30) == pytest.approx(43.0)


class TestRun:
    def test_artifacts(self, tmp_path):
        res = experiment.run(FAST, seed=1, out_dir=tmp_path)
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == ["config.txt", "qtable.csv", "report.csv", "training_log.csv",
                         "trajectory.csv"]
        assert len(rows(tmp_path / "training_log.csv")) == 60
        assert len(rows(tmp_path / "trajectory.csv")) == 29
        (rep,) = rows(tmp_path / "report.csv")
        assert float(rep["mape"]) == pytest.approx(res.report.mape, rel=1e-5)
        assert "seed = 1" in (tmp_path / "config.txt").read_text()

    def test_byte_identical(self, tmp_path):
        experiment.run(FAST, seed=4, out_dir=tmp_path / "a")
        experiment.run(FAST, seed=4, out_dir=tmp_path / "b")
        for name in ("training_log.csv", "trajectory.csv", "qtable.csv", "report.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_one_episode_is_flagged(self):
        cfg = FAST.with_overrides(max_episodes=1, stop_patience=50)
        res = experiment.run(cfg, seed=0, write=False)
        assert not res.report.converged
        assert res.training.no_convergence

    def test_evaluate_saved_table(self, tmp_path):
        res = experiment.run(FAST, seed=2, out_dir=tmp_path)
        q = qlearn.QTable.from_csv(tmp_path / "qtable.csv")
        again = experiment.evaluate(FAST, q)
        assert again.report.mape == res.report.mape
        assert np.array_equal(again.trajectory.weights, res.trajectory.weights)

    def test_evaluate_shape_mismatch(self):
        with pytest.raises(ConfigError):
            experiment.evaluate(FAST, qlearn.QTable.zeros(3, 3))

    def test_tank_temperatures_in_range(self):
        cfg = FAST.with_overrides(mode="tank")
        traj = experiment.run(cfg, seed=0, write=False).trajectory
        assert np.all((traj.temperature >= 29.6) & (traj.temperature <= 30.7))


class TestSweep:
    def test_cells(self):
        spec = SweepSpec({"dw": (10, 15), "dt": (7, 14), "reward": ("L2", "L2&L1", "L1")})
        assert len(spec.cells()) == 12
        assert SweepSpec().cells() == [{}]
        assert SweepSpec({"alpha": ()}).cells() == [{}]
        assert len(SweepSpec({"alpha": (0.1, 0.5), "gamma": (0.1, 0.5, 0.7, 1)}).cells()) == 8

    def test_cap(self):
        with pytest.raises(ConfigError):
            SweepSpec({"seed": tuple(range(50)), "alpha": tuple(range(50))}, max_cells=100).cells()

    def test_parse(self):
        spec = SweepSpec.parse(["dw=10, 15", "reward=L1"])
        assert spec.axes == {"dw": ("10", "15"), "reward": ("L1",)}
        with pytest.raises(ConfigError):
            SweepSpec.parse(["dw"])

    @pytest.mark.parametrize("axes,n", [
        ({"dw": ("10", "15"), "dt": ("7", "14"), "reward": ("L2", "L2&L1", "L1")}, 12),
        ({}, 1),
        ({"alpha": ("0.1", "0.5"), "gamma": ("0.1", "0.5", "0.7", "1")}, 8)])
    def test_row_counts(self, tmp_path, axes, n):
        base = FAST.with_overrides(max_episodes=3)
        res = experiment.sweep(SweepSpec(axes), base, seeds=[0], out_dir=tmp_path)
        summary = rows(tmp_path / "sweep.csv")
        assert len(summary) == n
        assert len(rows(tmp_path / "sweep_runs.csv")) == n
        assert list(summary[0])[: len(axes)] == list(axes)
        assert all(r["failures"] == "0" for r in summary)
        assert len(res.summary) == n

    def test_mean_over_seeds(self):
        res = experiment.sweep(SweepSpec({"lam": ("0.5",)}), FAST, seeds=[0, 1, 2])
        (cell, mean, n_ok, _, n_fail) = res.summary[0]
        singles = [experiment.run(FAST.with_overrides(lam="0.5"), seed=s, write=False).report
                   for s in (0, 1, 2)]
        assert n_ok == 3 and n_fail == 0
        assert mean.mape == pytest.approx(np.mean([r.mape for r in singles]))

    def test_failures_are_recorded(self):
        # a floor above the stocking weight starves every run on the first step
        res = experiment.sweep(SweepSpec({"floor": ("0.1", "50")}),
                               FAST.with_overrides(w0="6"), seeds=[0])
        buf = io.StringIO()
        res.write_runs(buf)
        assert res.summary[0][4] == 0 and res.summary[1][4] == 1
        assert "Starved" in buf.getvalue()
        assert len(buf.getvalue().splitlines()) == 3

    def test_parallel_matches_serial(self):
        spec = SweepSpec({"lam": ("0", "0.5")})
        a = experiment.sweep(spec, FAST, seeds=[0, 1], workers=1)
        b = experiment.sweep(spec, FAST, seeds=[0, 1], workers=2)
        sa, sb = io.StringIO(), io.StringIO()
        a.write_summary(sa)
        b.write_summary(sb)
        assert sa.getvalue() == sb.getvalue()


@pytest.mark.slow
def test_feed_penalty_reduces_feed():
    cage = ExperimentConfig(mode="cage")
    wins = 0
    for seed in range(10):
        free = experiment.run(cage.with_overrides(lam="0"), seed=seed, write=False).report
        taxed = experiment.run(cage, seed=seed, write=False).report
        wins += free.total_feed >= taxed.total_feed
    assert wins >= 8
