"""Experiment configuration, seeded runs and sensitivity sweeps.

A run trains one policy, plays it greedily on the simulator and writes::

    training_log.csv   episode,return,epsilon,policy_changes
    trajectory.csv     day,weight_g,reference_g,feed_rate,temperature_c
    qtable.csv         state,action,value (with a format header line)
    report.csv         one EvalReport row
    config.txt         the resolved flat config

Nothing time- or host-dependent is written, so a (config, seed) pair always
reproduces the same bytes.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import config as _config
from . import growth_model as gm
from . import mdp, qlearn
from .errors import AquaRLError, ConfigError
from .metrics import REPORT_COLUMNS, EvalReport, fmt

log = logging.getLogger(__name__)

DEFAULT_EPISODES = {"cage": 15000, "tank": 30000}

# one-line descriptions used by the CLI help
KEY_HELP = {
    "mode": "cage (feed only) or tank (feed x water temperature)",
    "w0": "stocking weight, g (default: reference weight at day 0)",
    "w_min": "lower bound of the weight grid, g",
    "w_max": "upper bound of the weight grid, g",
    "dw": "weight resolution, g",
    "dt": "time resolution (days per decision)",
    "horizon": "grow-out length, days",
    "n_feed_levels": "number of feeding-rate actions",
    "feed_min": "smallest relative feeding rate",
    "feed_max": "largest relative feeding rate",
    "n_temp_levels": "number of temperature actions (tank mode)",
    "temp_min": "lowest controllable water temperature, C",
    "temp_max": "highest controllable water temperature, C",
    "reward": "reward shape: L2, L2&L1 or L1",
    "lam": "feeding penalty weight",
    "alpha": "learning rate",
    "gamma": "discount factor",
    "epsilon0": "initial exploration probability",
    "t_epsilon": "exploration decay constant, episodes",
    "max_episodes": "episode cap (default 15000 cage / 30000 tank)",
    "stop_patience": "consecutive unchanged-policy episodes that count as converged (0 = never stop)",
    "temperature": "ambient water temperature, C (cage mode)",
    "dissolved_oxygen": "dissolved oxygen, mg/l",
    "uia": "un-ionised ammonia, mg/l",
    "reference": "'generated' or a CSV path with header day,weight_g",
    "ref_feed": "feeding rate used to generate the reference",
    "ref_temperature": "temperature used to generate the reference (default T_opt)",
    "substep": "Euler sub-step, days",
    "floor": "starvation weight floor, g",
    "seed": "RNG seed for a single run",
    "seeds": "seeds for sweeps (comma separated)",
    "out_dir": "output directory",
}


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "tank"
    w0: float | None = None
    w_min: float = 6.0
    w_max: float = 400.0
    dw: float = 10.0
    dt: int = 7
    horizon: int = 120
    n_feed_levels: int = 10
    feed_min: float = 0.01
    feed_max: float = 1.0
    n_temp_levels: int = 12
    temp_min: float = 29.6
    temp_max: float = 30.7
    reward: str = "L2"
    lam: float = 0.5
    alpha: float = 0.1
    gamma: float = 0.8
    epsilon0: float = 0.9
    t_epsilon: float = 6000.0
    max_episodes: int | None = None
    stop_patience: int = 50
    temperature: float = 29.7
    dissolved_oxygen: float = 0.3
    uia: float = 0.03
    reference: str = "generated"
    ref_feed: float = 0.2
    ref_temperature: float | None = None
    substep: float = 1.0
    floor: float = 0.1
    seed: int = 0
    seeds: tuple[int, ...] = tuple(range(10))
    out_dir: str = "runs"
    params: gm.GrowthParams = field(default_factory=gm.GrowthParams)

    def __post_init__(self):
        # build every component once so bad values fail before any run
        self.grid()
        self.action_space()
        self.reward_spec()
        self.conditions()
        self.train_config()
        if not 0 <= self.ref_feed <= 1:
            raise ConfigError("ref_feed must lie in [0, 1]")
        if self.w0 is not None and not self.w0 > 0:
            raise ConfigError("w0 must be positive")

    # -- construction -------------------------------------------------
    @classmethod
    def flat_keys(cls) -> list[str]:
        own = [f.name for f in dataclasses.fields(cls) if f.name != "params"]
        return own + [f.name for f in dataclasses.fields(gm.GrowthParams)]

    @classmethod
    def from_mapping(cls, values: dict, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        """Build from flat ``key -> value`` pairs (strings are coerced).

        Keys naming :class:`GrowthParams` fields override the model constants.
        """
        base = base or cls()
        param_keys = {f.name for f in dataclasses.fields(gm.GrowthParams)}
        own_types = _config.field_types(cls)
        unknown = set(values) - param_keys - set(own_types) | ({"params"} & set(values))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        p_types = _config.field_types(gm.GrowthParams)
        p_over = {k: _config._coerce(v, p_types[k], k) for k, v in values.items() if k in param_keys}
        own = {k: _config._coerce(v, own_types[k], k) for k, v in values.items() if k in own_types}
        try:
            params = replace(base.params, **p_over) if p_over else base.params
            return replace(base, params=params, **own)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        values = _config.read_kv_file(path)
        values.update(overrides)
        return cls.from_mapping(values)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return type(self).from_mapping(kw, base=self)

    def to_mapping(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "params":
                continue
            out[f.name] = getattr(self, f.name)
        out.update(dataclasses.asdict(self.params))
        return out

    def write(self, fh) -> None:
        for k, v in self.to_mapping().items():
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            fh.write(f"{k} = {'none' if v is None else v}\n")

    # -- components ---------------------------------------------------
    def grid(self) -> mdp.Grid:
        return mdp.Grid(self.w_min, self.w_max, self.dw, self.dt, self.horizon)

    def action_space(self) -> mdp.ActionSpace:
        return mdp.ActionSpace.evenly_spaced(
            self.mode, self.n_feed_levels, (self.feed_min, self.feed_max),
            self.n_temp_levels, (self.temp_min, self.temp_max))

    def reward_spec(self) -> mdp.RewardSpec:
        return mdp.RewardSpec(self.reward, self.lam)

    def conditions(self) -> gm.EnvConditions:
        return gm.EnvConditions(self.temperature, self.dissolved_oxygen, self.uia)

    def train_config(self, seed: int | None = None) -> qlearn.TrainConfig:
        episodes = self.max_episodes or DEFAULT_EPISODES.get(self.mode, 30000)
        return qlearn.TrainConfig(
            alpha=self.alpha, gamma=self.gamma, epsilon0=self.epsilon0,
            t_epsilon=self.t_epsilon, max_episodes=episodes,
            seed=self.seed if seed is None else seed, stop_patience=self.stop_patience)

    def make_reference(self) -> gm.Reference:
        if self.reference == "generated":
            w0 = 6.0 if self.w0 is None else self.w0
            settings = gm.ReferenceSettings(self.ref_feed, self.ref_temperature,
                                            self.dissolved_oxygen, self.uia)
            return gm.generate_reference(w0, self.horizon, self.params, settings,
                                         substep=self.substep, floor=self.floor)
        return gm.Reference.from_csv(self.reference)

    def build_env(self) -> mdp.FishEnv:
        return mdp.FishEnv(self.grid(), self.action_space(), self.reward_spec(),
                           self.make_reference(), params=self.params,
                           conditions=self.conditions(), w0=self.w0,
                           substep=self.substep, floor=self.floor)


@dataclass
class RunResult:
    report: EvalReport
    trajectory: mdp.PlantTrajectory
    training: qlearn.TrainResult | None
    out_dir: Path | None = None


def write_report(fh, reports, extra_columns=()) -> None:
    """``reports`` is a list of ``(extra values dict, EvalReport)`` pairs."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(list(extra_columns) + list(REPORT_COLUMNS))
    for extra, rep in reports:
        row = rep.row()
        w.writerow([fmt(extra[c]) if not isinstance(extra[c], str) else extra[c]
                    for c in extra_columns] + [row[c] for c in REPORT_COLUMNS])


def _write(path: Path, writer) -> None:
    buf = io.StringIO()
    writer(buf)
    path.write_text(buf.getvalue())


def run(cfg: ExperimentConfig, seed: int | None = None, out_dir=None,
        write: bool = True) -> RunResult:
    """Train, roll out the greedy policy and score it."""
    seed = cfg.seed if seed is None else seed
    env = cfg.build_env()
    result = qlearn.train(env, cfg.train_config(seed))
    if result.no_convergence:
        log.warning("seed %d: policy still changing after %d episodes", seed, result.episodes)
    traj = qlearn.rollout(result.policy, env, cfg.gamma)
    report = EvalReport.from_trajectory(traj, result.episodes, result.converged)
    path = None
    if write:
        path = Path(cfg.out_dir if out_dir is None else out_dir)
        path.mkdir(parents=True, exist_ok=True)
        _write(path / "training_log.csv", result.log.write_csv)
        _write(path / "trajectory.csv", traj.write_csv)
        _write(path / "qtable.csv", result.q.write_csv)
        _write(path / "report.csv", lambda fh: write_report(fh, [({}, report)]))
        _write(path / "config.txt", replace(cfg, seed=seed).write)
    return RunResult(report, traj, result, path)


def evaluate(cfg: ExperimentConfig, q: qlearn.QTable, out_dir=None) -> RunResult:
    """Score the greedy policy of an existing Q-table (no training)."""
    env = cfg.build_env()
    if q.shape != (env.n_states, env.n_actions):
        raise ConfigError(f"Q-table shape {q.shape} does not match the configured "
                          f"environment ({env.n_states}, {env.n_actions})")
    traj = qlearn.rollout(q.greedy(), env, cfg.gamma)
    report = EvalReport.from_trajectory(traj, 0, True)
    path = None
    if out_dir is not None:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        _write(path / "trajectory.csv", traj.write_csv)
        _write(path / "report.csv", lambda fh: write_report(fh, [({}, report)]))
    return RunResult(report, traj, None, path)


@dataclass(frozen=True)
class SweepSpec:
    """Named axes to cross. Axes with no values are ignored."""

    axes: dict = field(default_factory=dict)
    max_cells: int = 1000

    def cells(self) -> list[dict]:
        live = {k: tuple(v) for k, v in self.axes.items() if len(v) > 0}
        n = math.prod(len(v) for v in live.values())
        if n > self.max_cells:
            raise ConfigError(f"sweep has {n} cells, cap is {self.max_cells}")
        keys = list(live)
        return [dict(zip(keys, combo)) for combo in itertools.product(*live.values())]

    @classmethod
    def parse(cls, items, max_cells: int = 1000) -> "SweepSpec":
        """From ``["dw=10,15", "reward=L2,L1"]`` style strings."""
        axes = {}
        for item in items:
            if "=" not in item:
                raise ConfigError(f"axis must look like key=v1,v2: {item!r}")
            key, vals = item.split("=", 1)
            axes[key.strip()] = tuple(v.strip() for v in vals.split(",") if v.strip())
        return cls(axes, max_cells)


def _sweep_job(args):
    cfg, cell, seed = args
    try:
        res = run(cfg, seed=seed, write=False)
        return res.report, None
    except AquaRLError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def mean_report(reports) -> EvalReport:
    arr = lambda name: np.array([getattr(r, name) for r in reports], dtype=float)  # noqa: E731
    return EvalReport(
        fcr=float(np.nanmean(arr("fcr"))) if np.any(np.isfinite(arr("fcr"))) else math.nan,
        mape=float(arr("mape").mean()), mae=float(arr("mae").mean()),
        rmse=float(arr("rmse").mean()), total_feed=float(arr("total_feed").mean()),
        final_weight=float(arr("final_weight").mean()),
        episodes_to_converge=int(round(arr("episodes_to_converge").mean())),
        converged=bool(all(r.converged for r in reports)))


@dataclass
class SweepResult:
    axes: list
    cells: list  # dicts: cell values
    runs: list  # (cell index, seed, EvalReport | None, error | None)
    summary: list  # (cell, mean EvalReport | None, n_ok, n_converged, n_failed)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "sweep.csv", self.write_summary)
        _write(out / "sweep_runs.csv", self.write_runs)

    def write_summary(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.axes + list(REPORT_COLUMNS) + ["runs", "runs_converged", "failures"])
        for cell, rep, n_ok, n_conv, n_fail in self.summary:
            vals = [str(cell[a]) for a in self.axes]
            row = rep.row() if rep else {c: "" for c in REPORT_COLUMNS}
            w.writerow(vals + [row[c] for c in REPORT_COLUMNS] + [n_ok, n_conv, n_fail])

    def write_runs(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.axes + ["seed"] + list(REPORT_COLUMNS) + ["error"])
        for idx, seed, rep, err in self.runs:
            vals = [str(self.cells[idx][a]) for a in self.axes]
            row = rep.row() if rep else {c: "" for c in REPORT_COLUMNS}
            w.writerow(vals + [seed] + [row[c] for c in REPORT_COLUMNS] + [err or ""])


def sweep(spec: SweepSpec, base: ExperimentConfig, seeds=None, out_dir=None,
          workers: int = 1) -> SweepResult:
    """One run per (cell, seed); per-cell means; failed runs are recorded and skipped."""
    seeds = tuple(base.seeds if seeds is None else seeds)
    cells = spec.cells()
    configs = [base.with_overrides(**cell) for cell in cells]
    jobs = [(configs[i], cells[i], s) for i in range(len(cells)) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_sweep_job, jobs))
    else:
        outcomes = [_sweep_job(j) for j in jobs]
    runs, summary = [], []
    for i, cell in enumerate(cells):
        reps = []
        n_fail = 0
        for k, s in enumerate(seeds):
            rep, err = outcomes[i * len(seeds) + k]
            runs.append((i, s, rep, err))
            if rep is None:
                n_fail += 1
                log.error("cell %s seed %s failed: %s", cell, s, err)
            else:
                reps.append(rep)
        mean = mean_report(reps) if reps else None
        summary.append((cell, mean, len(reps), sum(r.converged for r in reps), n_fail))
    axes = [k for k, v in spec.axes.items() if len(v) > 0]
    result = SweepResult(axes, cells, runs, summary)
    if out_dir is not None:
        result.write(out_dir)
    return result
