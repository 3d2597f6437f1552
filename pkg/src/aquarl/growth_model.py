"""Bioenergetic growth model for Nile tilapia.

Weight changes as the difference between anabolism and fasting catabolism::

    dw/dt = Psi(f, T, DO) * v(UIA) * w**m - k(T) * w**n
    Psi   = h * rho * f * b * (1 - a) * tau(T) * sigma(DO)
    k(T)  = k_min * exp(j * (T - T_min))

The factor functions accept scalars or numpy arrays; scalar inputs give
Python floats back.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import config as _config
from .errors import ConfigError, NonFinite, Starved


@dataclass(frozen=True)
class GrowthParams:
    """Constants of the growth model. Defaults are the tilapia values."""

    m: float = 0.67
    n: float = 0.81
    h: float = 0.8
    b: float = 0.62
    a: float = 0.53
    k_min: float = 0.00133
    j: float = 0.0132
    kappa: float = 4.6
    T_opt: float = 33.0
    T_min: float = 24.0
    T_max: float = 40.0
    UIA_crit: float = 0.06
    UIA_max: float = 1.4
    DO_crit: float = 0.3
    DO_min: float = 1.0
    rho: float = 1.0
    rm_fraction: float = 0.03

    def __post_init__(self):
        if not (0 < self.m < 1 and 0 < self.n < 1):
            raise ConfigError("exponents m and n must lie in (0, 1)")
        if not self.T_min < self.T_opt < self.T_max:
            raise ConfigError("need T_min < T_opt < T_max")
        if not self.UIA_crit < self.UIA_max:
            raise ConfigError("need UIA_crit < UIA_max")
        if not 0 < self.rho < 2:
            raise ConfigError("photoperiod factor rho must lie in (0, 2)")
        if not 0 <= self.a < 1:
            raise ConfigError("assimilation loss fraction a must lie in [0, 1)")
        if self.rm_fraction <= 0:
            raise ConfigError("rm_fraction must be positive")
        for name in ("h", "b", "k_min", "kappa"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    @classmethod
    def from_file(cls, path) -> "GrowthParams":
        return _config.build(cls, _config.read_kv_file(path))

    def with_overrides(self, **kw) -> "GrowthParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class EnvConditions:
    """Exogenous water state. DO sits at its critical value by default."""

    temperature: float = 29.7
    dissolved_oxygen: float = 0.3
    uia: float = 0.03

    def __post_init__(self):
        for name in ("temperature", "dissolved_oxygen", "uia"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and non-negative, got {v}")


@dataclass(frozen=True)
class FishState:
    weight: float
    day: float = 0

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError(f"fish weight must be positive, got {self.weight}")
        if self.day < 0:
            raise ValueError("day must be non-negative")


def _ret(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def temperature_factor(T, p: GrowthParams):
    T = np.asarray(T, dtype=float)
    above = (T - p.T_opt) / (p.T_max - p.T_opt)
    below = (p.T_opt - T) / (p.T_opt - p.T_min)
    x = np.where(T > p.T_opt, above, np.where(T < p.T_opt, below, 0.0))
    return _ret(np.exp(-p.kappa * x**4))


def uia_factor(uia, p: GrowthParams):
    uia = np.asarray(uia, dtype=float)
    ramp = (p.UIA_max - uia) / (p.UIA_max - p.UIA_crit)
    out = np.where(uia <= p.UIA_crit, 1.0, np.where(uia < p.UIA_max, ramp, 0.0))
    return _ret(out)


def do_factor(do, p: GrowthParams):
    """Dissolved-oxygen factor.

    Full factor at and above ``DO_crit``. Below it, a linear ramp from
    ``DO_min`` is used only when ``DO_min < DO_crit``; with the default
    (inverted) thresholds the factor is a step at ``DO_crit``.
    """
    do = np.asarray(do, dtype=float)
    if p.DO_min < p.DO_crit:
        ramp = (do - p.DO_min) / (p.DO_crit - p.DO_min)
        below = np.where(do > p.DO_min, ramp, 0.0)
    else:
        below = np.zeros_like(do)
    return _ret(np.where(do >= p.DO_crit, 1.0, below))


def _check_feed(f):
    f = np.asarray(f, dtype=float)
    if np.any(f < 0) or np.any(f > 1) or np.any(np.isnan(f)):
        raise ValueError("relative feeding rate must lie in [0, 1]")
    return f


def anabolism_coefficient(f, env: EnvConditions, p: GrowthParams, *, temperature=None):
    """Psi = h rho f b (1 - a) tau(T) sigma(DO).

    ``temperature`` overrides ``env.temperature`` (may be an array, as for
    tank actions).
    """
    f = _check_feed(f)
    T = env.temperature if temperature is None else temperature
    psi = (p.h * p.rho * f * p.b * (1 - p.a)
           * temperature_factor(T, p) * do_factor(env.dissolved_oxygen, p))
    return _ret(psi)


def catabolism_coefficient(T, p: GrowthParams):
    return _ret(p.k_min * np.exp(p.j * (np.asarray(T, dtype=float) - p.T_min)))


def growth_rate(w, f, env: EnvConditions, p: GrowthParams, *, temperature=None):
    """dw/dt in g/day."""
    w = np.asarray(w, dtype=float)
    if np.any(~(w > 0)):
        raise ValueError("weight must be positive")
    T = env.temperature if temperature is None else temperature
    psi = anabolism_coefficient(f, env, p, temperature=T)
    rate = psi * uia_factor(env.uia, p) * w**p.m - catabolism_coefficient(T, p) * w**p.n
    return _ret(rate)


def equilibrium_weight(f, env: EnvConditions, p: GrowthParams, *, temperature=None) -> float:
    """Weight where anabolism balances catabolism (inf if n == m)."""
    T = env.temperature if temperature is None else temperature
    gain = anabolism_coefficient(f, env, p, temperature=T) * uia_factor(env.uia, p)
    if gain <= 0:
        return 0.0
    if p.n == p.m:
        return math.inf
    return float((gain / catabolism_coefficient(T, p)) ** (1.0 / (p.n - p.m)))


def integrate(w, f, env: EnvConditions, p: GrowthParams, days: float, *,
              temperature=None, substep: float = 1.0, floor: float = 0.1):
    """Explicit Euler over ``days`` with a fixed sub-step; vectorised.

    Returns ``(weights, starved)`` where ``starved`` marks entries that hit
    ``floor`` (those are held at the floor). No exception is raised here;
    :func:`step` turns the flag into :class:`Starved`.
    """
    if substep <= 0:
        raise ValueError("substep must be positive")
    w = np.array(w, dtype=float)
    f = _check_feed(f)
    T = env.temperature if temperature is None else temperature
    # rate = gain * w**m - loss * w**n with gain/loss fixed over the interval
    gain = anabolism_coefficient(f, env, p, temperature=T) * uia_factor(env.uia, p)
    loss = catabolism_coefficient(T, p)
    starved = np.zeros(np.broadcast(w, gain, loss).shape, dtype=bool)
    w = np.broadcast_to(w, starved.shape).copy()
    t = 0.0
    while t < days - 1e-12:
        hstep = min(substep, days - t)
        live = ~starved
        w_new = w + hstep * (gain * w**p.m - loss * w**p.n)
        w = np.where(live, w_new, w)
        hit = live & (w <= floor)
        w = np.where(hit, floor, w)
        starved |= hit
        t += hstep
    if not np.all(np.isfinite(w)):
        raise NonFinite("growth integration produced a non-finite weight")
    return w, starved


def step(state: FishState, f: float, env: EnvConditions, p: GrowthParams, dt: float = 1.0, *,
         temperature: float | None = None, substep: float = 1.0, floor: float = 0.1) -> FishState:
    """Advance one fish by ``dt`` days at constant feeding rate.

    Raises :class:`Starved` (carrying the floor state) if the weight reaches
    ``floor``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    w, starved = integrate(state.weight, f, env, p, dt,
                           temperature=temperature, substep=substep, floor=floor)
    new = FishState(float(w), state.day + dt)
    if bool(starved):
        raise Starved(f"weight reached the {floor} g floor by day {new.day}", state=new)
    return new


@dataclass(frozen=True)
class ReferenceSettings:
    """Conditions used to generate the surrogate reference trajectory.

    ``temperature=None`` means ``T_opt``. The default ration is below full
    feeding: a full-ration reference grows far faster than any policy can
    follow under the feed penalty (see README).
    """

    feed: float = 0.2
    temperature: float | None = None
    dissolved_oxygen: float = 0.3
    uia: float = 0.03


@dataclass(frozen=True)
class Reference:
    """Desired weight sampled on (not necessarily daily) days."""

    days: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.days, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if d.ndim != 1 or d.shape != w.shape or d.size == 0:
            raise ValueError("reference needs equal-length, non-empty day/weight arrays")
        if np.any(np.diff(d) <= 0):
            raise ValueError("reference days must be strictly increasing")
        if np.any(~(w > 0)):
            raise ValueError("reference weights must be positive")
        object.__setattr__(self, "days", d)
        object.__setattr__(self, "weights", w)

    @property
    def horizon(self) -> float:
        return float(self.days[-1])

    def at(self, day):
        """Linear interpolation between samples; constant beyond the ends."""
        return _ret(np.interp(day, self.days, self.weights))

    def daily(self, horizon: int | None = None) -> np.ndarray:
        horizon = int(self.horizon) if horizon is None else horizon
        return np.asarray(self.at(np.arange(horizon + 1)), dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            write_reference_csv(fh, self)

    @classmethod
    def from_csv(cls, path) -> "Reference":
        path = Path(path)
        try:
            fh = open(path, newline="")
        except OSError as exc:
            raise ConfigError(f"cannot read reference CSV {path}: {exc.strerror}") from exc
        with fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"day", "weight_g"} <= set(reader.fieldnames):
                raise ConfigError(f"{path}: expected header 'day,weight_g'")
            rows = [(float(r["day"]), float(r["weight_g"])) for r in reader]
        if not rows:
            raise ConfigError(f"{path}: no data rows")
        rows.sort()
        try:
            return cls(np.array([d for d, _ in rows]), np.array([w for _, w in rows]))
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def write_reference_csv(fh, ref: Reference) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["day", "weight_g"])
    for d, w in zip(ref.days, ref.weights):
        writer.writerow([f"{d:.6g}", f"{w:.6g}"])


def generate_reference(w0: float, horizon: int, p: GrowthParams,
                       settings: ReferenceSettings = ReferenceSettings(), *,
                       substep: float = 1.0, floor: float = 0.1) -> Reference:
    """Daily weights w(0..horizon) simulated under the reference settings."""
    if not w0 > 0:
        raise ValueError("w0 must be positive")
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    T = p.T_opt if settings.temperature is None else settings.temperature
    env = EnvConditions(T, settings.dissolved_oxygen, settings.uia)
    state = FishState(w0, 0)
    weights = [w0]
    for _ in range(int(horizon)):
        state = step(state, settings.feed, env, p, 1.0, substep=substep, floor=floor)
        weights.append(state.weight)
    return Reference(np.arange(len(weights), dtype=float), np.array(weights))
