"""Bootstrapped reward ensemble: shared trunk, K scalar heads, per-head
bootstrap assignments over the demonstration set, and the Gaussian-prior
gradient contribution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .core import ACTION_DIM, STATE_DIM, ConfigError

REWARD_INPUT_DIM = STATE_DIM + ACTION_DIM


@dataclass
class BootstrapRewardModel:
    params: nn.MlpParams
    prior_variance: float
    bootstrap_assignments: list[np.ndarray]  # K index multisets, each of size |T_d|

    def __post_init__(self):
        if self.prior_variance <= 0:
            raise ConfigError("prior_variance must be positive")
        if len(self.bootstrap_assignments) != self.params.num_heads:
            raise ValueError("one bootstrap assignment required per head")
        sizes = {len(a) for a in self.bootstrap_assignments}
        if len(sizes) > 1:
            raise ValueError("bootstrap assignments must share the demonstration count")

    @property
    def K(self) -> int:
        return self.params.num_heads

    @property
    def num_demos(self) -> int:
        return len(self.bootstrap_assignments[0])


def new_model(rng: np.random.Generator, num_demos: int, K: int,
              prior_variance: float, widths: tuple[int, ...] = (64, 16)) -> BootstrapRewardModel:
    params = nn.init_params(rng, prior_variance, widths, K, input_dim=REWARD_INPUT_DIM)
    assignments = bootstrap_assign(num_demos, K, rng)
    return BootstrapRewardModel(params=params, prior_variance=prior_variance,
                                bootstrap_assignments=assignments)


def sample_head(rng: np.random.Generator, K: int) -> int:
    return int(rng.integers(0, K))


def bootstrap_assign(num_demos: int, K: int, rng: np.random.Generator) -> list[np.ndarray]:
    """K with-replacement resamples of {0..num_demos-1}, each of full size."""
    if num_demos < 1:
        raise ValueError("num_demos must be >= 1")
    return [rng.integers(0, num_demos, size=num_demos) for _ in range(K)]


def _stack_input(s: np.ndarray, a: np.ndarray) -> np.ndarray:
    return np.concatenate([np.asarray(s, dtype=float), np.asarray(a, dtype=float)])


def head_reward(model: BootstrapRewardModel, s: np.ndarray, a: np.ndarray, k: int) -> float:
    return nn.forward(model.params, _stack_input(s, a), k)


def head_rewards_batch(model: BootstrapRewardModel, X: np.ndarray, k: int) -> np.ndarray:
    """Per-row head-k rewards for X of shape (n, 7) = [state; action]."""
    return nn.forward_batch(model.params, X, k)[:, 0]


def all_head_rewards(model: BootstrapRewardModel, X: np.ndarray) -> np.ndarray:
    """(n, K) matrix of per-head rewards; shares one trunk pass conceptually
    but is computed per head for kernel simplicity."""
    return np.column_stack([head_rewards_batch(model, X, k) for k in range(model.K)])


def mean_reward(model: BootstrapRewardModel, s: np.ndarray, a: np.ndarray) -> float:
    x = _stack_input(s, a)[None, :]
    return float(all_head_rewards(model, x).mean())


def reward_variance(model: BootstrapRewardModel, s: np.ndarray, a: np.ndarray) -> float:
    """Population (1/K) variance of the K head outputs."""
    x = _stack_input(s, a)[None, :]
    vals = all_head_rewards(model, x)[0]
    return float(np.mean((vals - vals.mean()) ** 2))


def mean_and_variance_batch(model: BootstrapRewardModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals = all_head_rewards(model, X)
    mean = vals.mean(axis=1)
    var = np.mean((vals - mean[:, None]) ** 2, axis=1)
    return mean, var


def traj_features(traj) -> np.ndarray:
    """(n, 7) reward-network input rows for a trajectory."""
    return np.hstack([traj.states, traj.actions])


def prior_grad(model: BootstrapRewardModel, head: int, grads: nn.GradBuffer) -> None:
    """Accumulate d log p(theta)/dtheta = -theta/sigma^2 for the trunk and the
    selected head."""
    inv = 1.0 / model.prior_variance
    for (W, b), (gW, gb) in zip(model.params.trunk, grads.trunk):
        gW -= inv * W
        gb -= inv * b
    W, b = model.params.heads[head]
    gW, gb = grads.heads[head]
    gW -= inv * W
    gb -= inv * b
