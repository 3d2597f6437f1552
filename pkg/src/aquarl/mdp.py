"""Finite-state MDP wrapped around the growth simulator.

States are (weight bin, time bin) pairs. Two views of the dynamics exist:

* :meth:`FishEnv.reset` / :meth:`FishEnv.step` carry the continuous fish
  weight between decisions and use the grid only to name the state. This is
  what the learner and :meth:`FishEnv.rollout` use.
* :meth:`FishEnv.env_step` and :meth:`FishEnv.tabular` restart every
  transition from the weight-bin centre, which makes the MDP exactly
  enumerable (useful for inspection and for value iteration).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import growth_model as gm
from .errors import ConfigError, NonFinite, Starved

REWARD_SHAPES = ("L2", "L2&L1", "L1")
MODES = ("cage", "tank")


class State(NamedTuple):
    weight_bin: int
    time_bin: int


class _Terminal:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "Terminal"

    def __reduce__(self):
        return (_Terminal, ())


TERMINAL = _Terminal()


class Transition(NamedTuple):
    next: object  # State or TERMINAL
    reward: float
    done: bool
    weight: float  # simulated weight at the end of the step


@dataclass(frozen=True)
class Grid:
    w_min: float = 6.0
    w_max: float = 400.0
    dw: float = 10.0
    dt: int = 7
    horizon: int = 120

    def __post_init__(self):
        if not self.w_min < self.w_max:
            raise ConfigError("grid needs w_min < w_max")
        if self.dw <= 0:
            raise ConfigError("dw must be positive")
        if self.dt < 1:
            raise ConfigError("dt must be at least one day")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least one day")

    @property
    def n_weight_bins(self) -> int:
        return int(math.floor((self.w_max - self.w_min) / self.dw + 0.5)) + 1

    @property
    def n_time_bins(self) -> int:
        return -(-self.horizon // self.dt)

    @property
    def n_states(self) -> int:
        return self.n_weight_bins * self.n_time_bins

    def centers(self) -> np.ndarray:
        return self.w_min + self.dw * np.arange(self.n_weight_bins)

    def center(self, s: State) -> tuple[float, int]:
        return self.w_min + self.dw * s.weight_bin, s.time_bin * self.dt

    def index(self, s: State) -> int:
        return s.time_bin * self.n_weight_bins + s.weight_bin

    def state(self, index: int) -> State:
        t, w = divmod(int(index), self.n_weight_bins)
        return State(w, t)


def weight_bin(w, grid: Grid):
    """Nearest bin centre, half rounded up, clamped to the grid (vectorised)."""
    k = np.floor((np.asarray(w, dtype=float) - grid.w_min) / grid.dw + 0.5)
    return np.clip(k, 0, grid.n_weight_bins - 1).astype(int)


def discretize(w: float, day: float, grid: Grid):
    if day < 0:
        raise ValueError("day must be non-negative")
    if day >= grid.horizon:
        return TERMINAL
    return State(int(weight_bin(w, grid)), int(day // grid.dt))


@dataclass(frozen=True)
class ActionSpace:
    feeding_levels: tuple[float, ...]
    temperature_levels: tuple[float, ...] | None = None

    def __post_init__(self):
        for name, levels in (("feeding", self.feeding_levels),
                             ("temperature", self.temperature_levels)):
            if levels is None:
                continue
            if len(levels) == 0:
                raise ConfigError(f"{name} levels must be non-empty")
            if any(b <= a for a, b in zip(levels, levels[1:])):
                raise ConfigError(f"{name} levels must be strictly increasing")
        if min(self.feeding_levels) < 0 or max(self.feeding_levels) > 1:
            raise ConfigError("feeding levels must lie in [0, 1]")

    @classmethod
    def evenly_spaced(cls, mode: str = "tank", n_feed: int = 10, feed_range=(0.01, 1.0),
                      n_temp: int = 12, temp_range=(29.6, 30.7)) -> "ActionSpace":
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        feed = tuple(float(x) for x in np.linspace(*feed_range, n_feed))
        temps = None
        if mode == "tank":
            temps = tuple(float(x) for x in np.linspace(*temp_range, n_temp))
        return cls(feed, temps)

    @property
    def mode(self) -> str:
        return "cage" if self.temperature_levels is None else "tank"

    @property
    def n(self) -> int:
        return len(self.feeding_levels) * len(self.temperature_levels or (None,))

    def decode(self, a: int) -> tuple[float, float | None]:
        if not 0 <= a < self.n:
            raise IndexError(f"action index {a} out of range for {self.n} actions")
        if self.temperature_levels is None:
            return self.feeding_levels[a], None
        i, k = divmod(a, len(self.temperature_levels))
        return self.feeding_levels[i], self.temperature_levels[k]

    def arrays(self, ambient: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-action feeding rates and temperatures (ambient in cage mode)."""
        pairs = [self.decode(a) for a in range(self.n)]
        f = np.array([p[0] for p in pairs])
        T = np.array([ambient if p[1] is None else p[1] for p in pairs])
        return f, T


@dataclass(frozen=True)
class RewardSpec:
    shape: str = "L2"
    lam: float = 0.5

    def __post_init__(self):
        if self.shape not in REWARD_SHAPES:
            raise ConfigError(f"reward shape must be one of {REWARD_SHAPES}, got {self.shape!r}")
        if self.lam < 0:
            raise ConfigError("regularisation weight must be non-negative")


def reward(w, w_desired, f, spec: RewardSpec):
    """Tracking-plus-feed penalty; always <= 0. Vectorised."""
    w_desired = np.asarray(w_desired, dtype=float)
    if np.any(~(w_desired > 0)):
        raise ValueError("desired weight must be positive")
    f = np.asarray(f, dtype=float)
    if np.any(f < 0) or np.any(f > 1):
        raise ValueError("feeding rate must lie in [0, 1]")
    err = (np.asarray(w, dtype=float) - w_desired) / w_desired
    if spec.shape == "L2":
        r = -(err * err + spec.lam * (f * f))
    elif spec.shape == "L2&L1":
        r = -(err * err + spec.lam * np.abs(f))
    else:
        r = -(np.abs(err) + spec.lam * np.abs(f))
    return gm._ret(r)


def total_feed(trajectory, p: gm.GrowthParams) -> float:
    """Grams fed over ``[(weight, f), ...]`` daily pairs (ration = f * R_M * w)."""
    return float(sum(f * p.rm_fraction * w for w, f in trajectory))


@dataclass(frozen=True)
class TabularMDP:
    """Deterministic finite MDP as dense arrays.

    ``next_state[s, a] == -1`` marks a transition into the terminal state.
    """

    next_state: np.ndarray
    reward: np.ndarray
    initial_state: int = 0

    def __post_init__(self):
        ns = np.asarray(self.next_state, dtype=np.int64)
        r = np.asarray(self.reward, dtype=float)
        if ns.shape != r.shape or ns.ndim != 2:
            raise ValueError("next_state and reward must be equal-shape 2-D arrays")
        if np.any(ns < -1) or np.any(ns >= ns.shape[0]):
            raise ValueError("next_state entries must be -1 or valid state indices")
        object.__setattr__(self, "next_state", ns)
        object.__setattr__(self, "reward", r)

    @property
    def n_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def n_actions(self) -> int:
        return self.next_state.shape[1]

    def tabular(self) -> "TabularMDP":
        return self

    def reset(self):
        return self.initial_state, self.initial_state

    def step(self, obs, action: int):
        nxt = int(self.next_state[obs, action])
        return nxt, float(self.reward[obs, action]), nxt

    def rollout(self, policy, gamma: float = 1.0, max_steps: int = 10_000) -> "Episode":
        s = self.initial_state
        states, actions, rewards = [], [], []
        while s != -1 and len(states) < max_steps:
            a = int(policy[s])
            states.append(s)
            actions.append(a)
            rewards.append(float(self.reward[s, a]))
            s = int(self.next_state[s, a])
        return Episode(states, actions, rewards, _discounted(rewards, gamma))


def _discounted(rewards, gamma):
    total = 0.0
    for r in reversed(rewards):
        total = r + gamma * total
    return total


class Episode(NamedTuple):
    states: list
    actions: list
    rewards: list
    discounted_return: float


@dataclass
class PlantTrajectory:
    """Daily record of one greedy episode played on the simulator."""

    days: np.ndarray
    weights: np.ndarray
    reference: np.ndarray
    feed: np.ndarray  # per day, len == len(days) - 1
    temperature: np.ndarray  # per day
    states: list
    actions: list
    rewards: list
    discounted_return: float
    starved: bool = False

    @property
    def total_feed(self) -> float:
        return float(np.sum(self.feed * self._rm * self.weights[:-1]))

    _rm: float = field(default=0.03, repr=False)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "weight_g", "reference_g", "feed_rate", "temperature_c"])
        for i, day in enumerate(self.days):
            f = self.feed[i] if i < len(self.feed) else None
            T = self.temperature[i] if i < len(self.temperature) else None
            w.writerow([int(day), f"{self.weights[i]:.6g}", f"{self.reference[i]:.6g}",
                        "" if f is None else f"{f:.6g}", "" if T is None else f"{T:.6g}"])


class FishEnv:
    """Trajectory-tracking environment for cages (feed only) or tanks (feed x temperature).

    ``conditions.temperature`` is the ambient (cage) temperature; tank
    actions override it. DO and UIA are held constant. ``substep`` should
    divide one day.
    """

    def __init__(self, grid: Grid, actions: ActionSpace, reward_spec: RewardSpec,
                 reference: gm.Reference, *, params: gm.GrowthParams = gm.GrowthParams(),
                 conditions: gm.EnvConditions = gm.EnvConditions(), w0: float | None = None,
                 substep: float = 1.0, floor: float = 0.1):
        self.grid = grid
        self.actions = actions
        self.reward_spec = reward_spec
        self.reference = reference
        self.params = params
        self.conditions = conditions
        self.w0 = float(reference.at(0)) if w0 is None else float(w0)
        self.substep = substep
        self.floor = floor
        if not self.w0 > 0:
            raise ConfigError("initial weight must be positive")
        if reference.horizon < grid.horizon:
            raise ConfigError(
                f"reference covers {reference.horizon:g} days, grid horizon is {grid.horizon}")
        if not 0 < substep <= 1:
            raise ConfigError("substep must lie in (0, 1] days")
        f, T = actions.arrays(conditions.temperature)
        gain = gm.anabolism_coefficient(f, conditions, params, temperature=T) \
            * gm.uia_factor(conditions.uia, params)
        # plain lists: the learner's inner loop runs on Python floats
        self._feed = f.tolist()
        self._temp = T.tolist()
        self._gain = np.asarray(gain, dtype=float).tolist()
        self._loss = np.asarray(gm.catabolism_coefficient(T, params), dtype=float).tolist()
        self._spans = [min(grid.dt, grid.horizon - t * grid.dt) for t in range(grid.n_time_bins)]
        self._ref_next = [float(reference.at(t * grid.dt + span))
                          for t, span in enumerate(self._spans)]
        hs, t = [], 0.0
        while t < 1 - 1e-12:
            hs.append(min(substep, 1 - t))
            t += hs[-1]
        self._day_steps = hs

    @property
    def mode(self) -> str:
        return self.actions.mode

    @property
    def n_states(self) -> int:
        return self.grid.n_states

    @property
    def n_actions(self) -> int:
        return self.actions.n

    @property
    def initial_state(self) -> State:
        return discretize(self.w0, 0, self.grid)

    def _advance(self, w: float, action: int, time_bin: int, record=None):
        """Integrate one time bin day by day; returns (weight, starved)."""
        g, l = self._gain[action], self._loss[action]
        m, n = self.params.m, self.params.n
        floor = self.floor
        for _ in range(self._spans[time_bin]):
            if w > floor:
                for h in self._day_steps:
                    w = w + h * (g * w**m - l * w**n)
                    if w <= floor:
                        w = floor
                        break
                if not math.isfinite(w):
                    raise NonFinite("growth integration produced a non-finite weight")
            if record is not None:
                record.append(w)
        return w, w <= floor

    def _reward(self, w: float, time_bin: int, action: int) -> float:
        wd = self._ref_next[time_bin]
        f = self._feed[action]
        err = (w - wd) / wd
        shape, lam = self.reward_spec.shape, self.reward_spec.lam
        if shape == "L2":
            return -(err * err + lam * (f * f))
        if shape == "L2&L1":
            return -(err * err + lam * abs(f))
        return -(abs(err) + lam * abs(f))

    def _bin(self, w: float) -> int:
        g = self.grid
        k = math.floor((w - g.w_min) / g.dw + 0.5)
        return min(max(k, 0), g.n_weight_bins - 1)

    def reset(self):
        """Start an episode: ``(state index, observation)``."""
        return self.grid.index(self.initial_state), (self.w0, 0)

    def step(self, obs, action: int):
        """Advance the continuous fish one time bin.

        ``obs`` is ``(weight, time_bin)``. Returns ``(next state index or -1,
        reward, next observation)``.
        """
        return self._step_recorded(obs, action, None)

    def env_step(self, state, action: int, weight: float | None = None) -> Transition:
        """Transition from a grid state.

        Starts from the bin centre unless a continuous ``weight`` is given.
        """
        if state is TERMINAL:
            raise ValueError("cannot step from the terminal state")
        f, T = self.actions.decode(action)
        w, day = self.grid.center(state)
        if weight is not None:
            w = weight
        fish = gm.FishState(w, day)
        starved = False
        for _ in range(self._spans[state.time_bin]):
            try:
                fish = gm.step(fish, f, self.conditions, self.params, 1,
                               temperature=T, substep=self.substep, floor=self.floor)
            except Starved as exc:
                fish, starved = exc.state, True
                break
        day = state.time_bin * self.grid.dt + self._spans[state.time_bin]
        r = reward(fish.weight, self.reference.at(day), f, self.reward_spec)
        s2 = TERMINAL if starved else discretize(fish.weight, day, self.grid)
        return Transition(s2, float(r), s2 is TERMINAL, fish.weight)

    @cached_property
    def _tables(self) -> TabularMDP:
        g = self.grid
        n_w, n_a = g.n_weight_bins, self.actions.n
        next_state = np.empty((g.n_states, n_a), dtype=np.int64)
        rewards = np.empty((g.n_states, n_a))
        for t in range(g.n_time_bins):
            for k, w in enumerate(g.centers()):
                s = t * n_w + k
                for a in range(n_a):
                    w2, starved = self._advance(float(w), a, t)
                    rewards[s, a] = self._reward(w2, t, a)
                    last = starved or t + 1 >= g.n_time_bins
                    next_state[s, a] = -1 if last else (t + 1) * n_w + self._bin(w2)
        return TabularMDP(next_state, rewards, g.index(self.initial_state))

    def tabular(self) -> TabularMDP:
        """Bin-centre restart abstraction of the dynamics as dense arrays."""
        return self._tables

    def rollout(self, policy, gamma: float = 1.0) -> PlantTrajectory:
        """Greedy episode on the continuous simulator with its daily record."""
        g = self.grid
        s, obs = self.reset()
        weights = [self.w0]
        feed, temps, states, actions, rewards = [], [], [], [], []
        while s != -1:
            a = int(policy[s])
            states.append(g.state(s))
            actions.append(a)
            n_days = self._spans[obs[1]]
            s, r, obs = self._step_recorded(obs, a, weights)
            feed.extend([self._feed[a]] * n_days)
            temps.extend([self._temp[a]] * n_days)
            rewards.append(r)
        starved = obs[0] <= self.floor
        while len(weights) < g.horizon + 1:
            weights.append(self.floor)
            feed.append(0.0)
            temps.append(self.conditions.temperature)
        return PlantTrajectory(
            days=np.arange(g.horizon + 1), weights=np.array(weights),
            reference=self.reference.daily(g.horizon), feed=np.array(feed),
            temperature=np.array(temps), states=states, actions=actions, rewards=rewards,
            discounted_return=_discounted(rewards, gamma), starved=starved,
            _rm=self.params.rm_fraction)

    def _step_recorded(self, obs, action, record):
        w, t = obs
        w, starved = self._advance(w, action, t, record)
        r = self._reward(w, t, action)
        t += 1
        if starved or t >= self.grid.n_time_bins:
            return -1, r, (w, t)
        return t * self.grid.n_weight_bins + self._bin(w), r, (w, t)
