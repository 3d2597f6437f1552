"""Tabular Q-learning with annealed epsilon-greedy exploration.

The learner drives any environment exposing ``n_states``, ``n_actions``,
``reset() -> (state, obs)`` and ``step(obs, a) -> (next_state, reward,
obs)`` with ``-1`` as the terminal state. The value-iteration oracle needs
``tabular()`` instead.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonFinite
from .mdp import TabularMDP

log = logging.getLogger(__name__)

QTABLE_FORMAT = "aquarl-qtable/1"


@dataclass(frozen=True)
class TrainConfig:
    """Learner settings.

    ``t_epsilon = inf`` keeps exploration at ``epsilon0`` for the whole run.
    ``alpha_decay`` (an exponent w) switches the constant learning rate to
    ``alpha / n(s, a)**w``; ``stop_patience = 0`` disables early stopping.
    """

    alpha: float = 0.1
    gamma: float = 0.8
    epsilon0: float = 0.9
    t_epsilon: float = 6000.0
    max_episodes: int = 30000
    seed: int = 0
    stop_patience: int = 50
    alpha_decay: float | None = None
    max_steps: int = 10_000

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must lie in (0, 1]")
        if not 0 <= self.gamma <= 1:
            raise ConfigError("gamma must lie in [0, 1]")
        if not 0 <= self.epsilon0 <= 1:
            raise ConfigError("epsilon0 must lie in [0, 1]")
        if not self.t_epsilon > 0:
            raise ConfigError("t_epsilon must be positive")
        if self.max_episodes < 1:
            raise ConfigError("max_episodes must be at least 1")
        if self.stop_patience < 0:
            raise ConfigError("stop_patience must be non-negative")
        if self.alpha_decay is not None and self.alpha_decay < 0:
            raise ConfigError("alpha_decay must be non-negative")


def epsilon_schedule(episode: int, cfg: TrainConfig) -> float:
    """Exploration probability ``epsilon0 * exp(-episode / t_epsilon)``."""
    if episode < 0:
        raise ValueError("episode must be non-negative")
    eps = cfg.epsilon0 * math.exp(-episode / cfg.t_epsilon)
    return min(max(eps, 0.0), 1.0)


@dataclass
class QTable:
    values: np.ndarray

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "QTable":
        return cls(np.zeros((n_states, n_actions)))

    @property
    def shape(self):
        return self.values.shape

    def greedy(self) -> np.ndarray:
        # argmax breaks ties towards the lowest action index
        return np.argmax(self.values, axis=1)

    def write_csv(self, fh) -> None:
        n_s, n_a = self.values.shape
        fh.write(f"# {QTABLE_FORMAT} n_states={n_s} n_actions={n_a}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state", "action", "value"])
        for s in range(n_s):
            for a in range(n_a):
                # full precision so a reloaded table resumes exactly
                w.writerow([s, a, repr(float(self.values[s, a]))])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    @classmethod
    def from_csv(cls, path) -> "QTable":
        try:
            fh = open(path, newline="")
        except OSError as exc:
            raise ConfigError(f"cannot read Q-table {path}: {exc.strerror}") from exc
        with fh:
            first = fh.readline()
            if not first.startswith(f"# {QTABLE_FORMAT}"):
                raise ConfigError(f"{path}: not a {QTABLE_FORMAT} file")
            meta = dict(tok.split("=") for tok in first.split()[2:])
            values = np.zeros((int(meta["n_states"]), int(meta["n_actions"])))
            for row in csv.DictReader(fh):
                values[int(row["state"]), int(row["action"])] = float(row["value"])
        return cls(values)


def td_update(q: QTable, s: int, a: int, r: float, s_next, cfg: TrainConfig,
              alpha: float | None = None) -> float:
    """One temporal-difference step on ``q`` in place; returns the new Q(s, a).

    ``s_next`` of ``None`` or ``-1`` is the terminal state (bootstrap 0).
    """
    alpha = cfg.alpha if alpha is None else alpha
    boot = 0.0 if s_next is None or s_next == -1 else float(q.values[s_next].max())
    old = q.values[s, a]
    new = old + alpha * (r + cfg.gamma * boot - old)
    if not math.isfinite(new):
        raise NonFinite(f"TD update produced {new} at state {s}, action {a}")
    q.values[s, a] = new
    return float(new)


@dataclass
class TrainingLog:
    returns: list = field(default_factory=list)
    epsilons: list = field(default_factory=list)
    policy_changes: list = field(default_factory=list)

    def __len__(self):
        return len(self.returns)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "return", "epsilon", "policy_changes"])
        for i, (r, e, c) in enumerate(zip(self.returns, self.epsilons, self.policy_changes)):
            w.writerow([i, f"{r:.6g}", f"{e:.6g}", c])

    def moving_average(self, window: int = 200) -> np.ndarray:
        r = np.asarray(self.returns, dtype=float)
        if len(r) < window:
            return np.array([])
        c = np.cumsum(np.insert(r, 0, 0.0))
        return (c[window:] - c[:-window]) / window


@dataclass
class TrainResult:
    q: QTable
    policy: np.ndarray
    log: TrainingLog
    converged: bool
    episodes: int

    @property
    def no_convergence(self) -> bool:
        return not self.converged


def train(env, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Episodic Q-learning from the environment's initial state.

    Stops once the greedy policy has come through ``stop_patience``
    consecutive episodes unchanged, or after ``max_episodes``.
    """
    n_s, n_a = env.n_states, env.n_actions
    step = env.step
    Q = np.zeros((n_s, n_a))
    q = QTable(Q)
    greedy = np.zeros(n_s, dtype=np.int64)
    visits = np.zeros((n_s, n_a), dtype=np.int64) if cfg.alpha_decay is not None else None
    rng = np.random.default_rng(cfg.seed)
    log_ = TrainingLog()
    gamma, alpha = cfg.gamma, cfg.alpha
    stable = 0
    converged = False
    episode = 0
    while episode < cfg.max_episodes:
        eps = epsilon_schedule(episode, cfg)
        before = greedy.copy()
        s, obs = env.reset()
        ret = 0.0
        steps = 0
        while s != -1 and steps < cfg.max_steps:
            if eps > 0 and rng.random() < eps:
                a = int(rng.integers(n_a))
            else:
                a = int(greedy[s])
            s2, r, obs = step(obs, a)
            if visits is not None:
                visits[s, a] += 1
                lr = alpha / visits[s, a] ** cfg.alpha_decay
            else:
                lr = alpha
            row = Q[s]
            boot = 0.0 if s2 == -1 else Q[s2].max()
            row[a] += lr * (r + gamma * boot - row[a])
            greedy[s] = row.argmax()
            ret += r
            s = s2
            steps += 1
        changes = int(np.count_nonzero(before != greedy))
        log_.returns.append(ret)
        log_.epsilons.append(eps)
        log_.policy_changes.append(changes)
        episode += 1
        if cfg.stop_patience:
            stable = stable + 1 if changes == 0 else 0
            if stable >= cfg.stop_patience:
                converged = True
                break
    if not np.all(np.isfinite(Q)):
        raise NonFinite("Q-table contains non-finite values")
    if not converged and cfg.stop_patience:
        log.info("no convergence after %d episodes", episode)
    return TrainResult(q, q.greedy(), log_, converged, episode)


def value_iteration_oracle(env, gamma: float, tolerance: float = 1e-10,
                           max_sweeps: int = 1_000_000) -> QTable:
    """Synchronous sweeps of Q <- r + gamma * max Q(s', .) to a fixed point."""
    mdp: TabularMDP = env.tabular()
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_sweeps):
        # trailing zero is the terminal state's value, reached via index -1
        v = np.append(Q.max(axis=1), 0.0) if mdp.n_states else np.zeros(1)
        new = mdp.reward + gamma * v[mdp.next_state]
        delta = np.max(np.abs(new - Q)) if Q.size else 0.0
        Q = new
        if delta < tolerance:
            break
    else:
        log.warning("value iteration stopped after %d sweeps (delta %.3g)", max_sweeps, delta)
    return QTable(Q)


def rollout(policy, env, gamma: float = 1.0):
    """Deterministic greedy episode from the initial state.

    Dispatches to ``env.rollout``: a :class:`FishEnv` plays the policy on
    the continuous simulator, a :class:`TabularMDP` follows its table.
    """
    return env.rollout(np.asarray(policy), gamma)
