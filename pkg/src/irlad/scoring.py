"""Normality scoring and anomaly decisions: normalization statistics, point
and trajectory scores, and the AD/ADU decision rules."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import reward as reward_mod
from .core import Trajectory
from .reward import BootstrapRewardModel

STD_FLOOR = 1e-6

DEFAULT_EPSILON = -2.0
DEFAULT_UNCERTAINTY_GATE = 1.5

SCORE_CSV_HEADER = "traj_id,step,t_seconds,lon,lat,reward_mean,reward_std,normality,flag"


class Mode(Enum):
    AD = "ad"
    ADU = "adu"


class Flag(Enum):
    NORMAL = "normal"
    ANOMALY = "anomaly"
    UNCERTAIN_ANOMALY = "uncertain_anomaly"


@dataclass(frozen=True)
class NormalizationStats:
    mean: float  # mean of ensemble-mean reward over training observations
    std: float  # floored standard deviation of the same
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("stats require at least one observation")


@dataclass(frozen=True)
class Detection:
    normality: float
    uncertainty: float  # across-head reward standard deviation
    flag: Flag
    epsilon: float
    uncertainty_gate: float
    mode: Mode
    point_flags: tuple[Flag, ...] = ()


def fit_stats(model: BootstrapRewardModel, demos) -> NormalizationStats:
    """Mean/std of ensemble-mean reward over every observation of every
    demonstration trajectory; frozen thereafter."""
    trajs = list(demos)
    if not trajs:
        raise ValueError("cannot fit stats on an empty demonstration set")
    X = np.vstack([reward_mod.traj_features(t) for t in trajs])
    means, _ = reward_mod.mean_and_variance_batch(model, X)
    std = float(means.std())
    return NormalizationStats(mean=float(means.mean()),
                              std=max(std, STD_FLOOR), count=len(means))


def _normality_from_mean(stats: NormalizationStats, reward_mean) -> np.ndarray:
    if stats.std <= STD_FLOOR:
        # Degenerate constant-reward model: define the z-score as 0.
        return np.zeros_like(np.asarray(reward_mean, dtype=float))
    return (np.asarray(reward_mean, dtype=float) - stats.mean) / stats.std


def normality(model: BootstrapRewardModel, stats: NormalizationStats,
              s: np.ndarray, a: np.ndarray) -> float:
    return float(_normality_from_mean(stats, reward_mod.mean_reward(model, s, a)))


def point_scores(model: BootstrapRewardModel, stats: NormalizationStats,
                 traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(reward_mean, reward_std, normality) arrays, one entry per step."""
    X = reward_mod.traj_features(traj)
    mean, var = reward_mod.mean_and_variance_batch(model, X)
    return mean, np.sqrt(var), _normality_from_mean(stats, mean)


def traj_normality(model: BootstrapRewardModel, stats: NormalizationStats,
                   traj: Trajectory) -> float:
    """Arithmetic mean of the per-step normality scores."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    return float(point_scores(model, stats, traj)[2].mean())


def _decide(n: float, sigma_r: float, epsilon: float, gate: float, mode: Mode) -> Flag:
    if n > epsilon:
        return Flag.NORMAL
    if mode is Mode.AD or sigma_r <= gate:
        return Flag.ANOMALY
    return Flag.UNCERTAIN_ANOMALY  # suppressed flag, candidate for human review


def detect_point(model: BootstrapRewardModel, stats: NormalizationStats,
                 s: np.ndarray, a: np.ndarray,
                 epsilon: float = DEFAULT_EPSILON,
                 uncertainty_gate: float = DEFAULT_UNCERTAINTY_GATE,
                 mode: Mode = Mode.ADU) -> Detection:
    n = normality(model, stats, s, a)
    sigma_r = float(np.sqrt(reward_mod.reward_variance(model, s, a)))
    return Detection(normality=n, uncertainty=sigma_r,
                     flag=_decide(n, sigma_r, epsilon, uncertainty_gate, mode),
                     epsilon=epsilon, uncertainty_gate=uncertainty_gate, mode=mode)


def detect(model: BootstrapRewardModel, stats: NormalizationStats,
           traj: Trajectory,
           epsilon: float = DEFAULT_EPSILON,
           uncertainty_gate: float = DEFAULT_UNCERTAINTY_GATE,
           mode: Mode = Mode.ADU) -> Detection:
    """Trajectory-level decision: n = mean point normality, sigma_r = mean
    per-step reward standard deviation. Point-level flags are carried along
    for anomaly localization."""
    _, stds, norms = point_scores(model, stats, traj)
    n = float(norms.mean())
    sigma_r = float(stds.mean())
    pflags = tuple(_decide(float(ni), float(si), epsilon, uncertainty_gate, mode)
                   for ni, si in zip(norms, stds))
    return Detection(normality=n, uncertainty=sigma_r,
                     flag=_decide(n, sigma_r, epsilon, uncertainty_gate, mode),
                     epsilon=epsilon, uncertainty_gate=uncertainty_gate,
                     mode=mode, point_flags=pflags)


def score_rows(model: BootstrapRewardModel, stats: NormalizationStats,
               traj: Trajectory,
               epsilon: float = DEFAULT_EPSILON,
               uncertainty_gate: float = DEFAULT_UNCERTAINTY_GATE,
               mode: Mode = Mode.ADU) -> list[str]:
    """Per-step score CSV rows (the plot-emitting surface)."""
    mean, std, norm = point_scores(model, stats, traj)
    rows = []
    for i in range(len(traj)):
        flag = _decide(float(norm[i]), float(std[i]), epsilon, uncertainty_gate, mode)
        rows.append(
            f"{traj.traj_id},{i},{traj.times[i]:.6f},"
            f"{traj.states[i, 0]:.9f},{traj.states[i, 1]:.9f},"
            f"{mean[i]:.9f},{std[i]:.9f},{norm[i]:.9f},{flag.value}"
        )
    return rows
