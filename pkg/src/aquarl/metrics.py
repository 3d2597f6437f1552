"""Tracking and feeding-efficiency metrics for rollout trajectories."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


def fcr(total_feed: float, final_w: float, initial_w: float) -> float:
    """Feed conversion ratio: feed mass over weight gained."""
    if not final_w > initial_w:
        raise ValueError("FCR is undefined unless the fish gained weight")
    return float(total_feed / (final_w - initial_w))


def _pair(w, w_d):
    w = np.asarray(w, dtype=float)
    w_d = np.asarray(w_d, dtype=float)
    if w.shape != w_d.shape or w.ndim != 1:
        raise ValueError("series must be 1-D and of equal length")
    if w.size == 0:
        raise ValueError("series must be non-empty")
    return w, w_d


def mape(w, w_d) -> float:
    """Mean absolute percentage error, relative to the *achieved* weight w."""
    w, w_d = _pair(w, w_d)
    if np.any(w <= 0):
        raise ValueError("achieved weights must be positive")
    return float(np.mean(np.abs(w - w_d) / w) * 100.0)


def mae(w, w_d) -> float:
    w, w_d = _pair(w, w_d)
    return float(np.mean(np.abs(w - w_d)))


def rmse(w, w_d) -> float:
    w, w_d = _pair(w, w_d)
    return float(np.sqrt(np.mean((w - w_d) ** 2)))


REPORT_COLUMNS = ("training_episodes", "mape", "mae", "rmse", "total_feed",
                  "final_weight", "fcr", "converged")


@dataclass(frozen=True)
class EvalReport:
    fcr: float
    mape: float
    mae: float
    rmse: float
    total_feed: float
    final_weight: float
    episodes_to_converge: int
    converged: bool = True

    @classmethod
    def from_trajectory(cls, traj, episodes: int, converged: bool) -> "EvalReport":
        """Score a daily trajectory; day 0 (stocking) is excluded from the errors."""
        w, ref = traj.weights[1:], traj.reference[1:]
        feed = traj.total_feed
        try:
            ratio = fcr(feed, traj.weights[-1], traj.weights[0])
        except ValueError:
            ratio = math.nan
        return cls(fcr=ratio, mape=mape(w, ref), mae=mae(w, ref), rmse=rmse(w, ref),
                   total_feed=feed, final_weight=float(traj.weights[-1]),
                   episodes_to_converge=int(episodes), converged=bool(converged))

    def row(self) -> dict:
        """Values in :data:`REPORT_COLUMNS` order, formatted to 6 significant digits."""
        d = asdict(self)
        vals = {"training_episodes": d["episodes_to_converge"], "converged": int(d["converged"])}
        for k in ("mape", "mae", "rmse", "total_feed", "final_weight", "fcr"):
            vals[k] = d[k]
        return {k: fmt(vals[k]) for k in REPORT_COLUMNS}


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.6g}"
