"""Training engine: importance-weighted MAP gradient estimation, the per-head
reward update, and the outer loop alternating reward and policy updates."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import nn
from . import policy as policy_mod
from . import reward as reward_mod
from .core import ConfigError, TrainConfig, Trajectory, TrajectorySet, traj_return
from .policy import GaussianPolicy, KinematicEnv, PolicyOptimizer, RolloutRecord
from .reward import BootstrapRewardModel

TRAIN_LOG_HEADER = "iter,head,demo_return,bg_return,ess,policy_kl,wall_ms"


@dataclass
class BackgroundBuffer:
    """Rollout store with oldest-first eviction past capacity."""

    capacity: int
    records: list[RolloutRecord] = field(default_factory=list)

    def extend(self, recs: Sequence[RolloutRecord]) -> None:
        self.records.extend(recs)
        if len(self.records) > self.capacity:
            del self.records[: len(self.records) - self.capacity]

    def sample(self, n: int, rng: np.random.Generator) -> list[RolloutRecord]:
        if not self.records:
            raise ValueError("background buffer is empty")
        idx = rng.integers(0, len(self.records), size=n)
        return [self.records[i] for i in idx]

    def __len__(self) -> int:
        return len(self.records)


def normalized_weights(log_w: np.ndarray) -> tuple[np.ndarray, float]:
    """Self-normalized importance weights computed in the log domain."""
    log_w = np.asarray(log_w, dtype=float)
    if log_w.size == 0:
        raise ValueError("empty batch")
    log_norm = float(logsumexp(log_w))
    return np.exp(log_w - log_norm), log_norm


def importance_weights(batch: Sequence[tuple[Trajectory, float]],
                       reward_fn: Callable[[np.ndarray, np.ndarray], float]) -> np.ndarray:
    """Normalized weights w_j ~ exp(R(tau_j) - log q(tau_j)) for a batch of
    (trajectory, log q) pairs under the sampled head's reward."""
    log_w = np.array([traj_return(t, reward_fn) - lq for t, lq in batch])
    return normalized_weights(log_w)[0]


def effective_sample_size(weights: np.ndarray) -> float:
    return float(1.0 / np.sum(weights ** 2))


def _stacked_features(trajs: Sequence[Trajectory]) -> tuple[np.ndarray, np.ndarray]:
    """Concatenated (n_steps, 7) feature rows plus reduceat offsets."""
    X = np.vstack([reward_mod.traj_features(t) for t in trajs])
    offsets = np.concatenate([[0], np.cumsum([len(t) for t in trajs])[:-1]])
    return X, offsets


def batch_returns(model: BootstrapRewardModel, head: int,
                  trajs: Sequence[Trajectory]) -> np.ndarray:
    X, offsets = _stacked_features(trajs)
    r = reward_mod.head_rewards_batch(model, X, head)
    return np.add.reduceat(r, offsets)


@dataclass
class IrlUpdateBatch:
    demo_trajs: list[Trajectory]
    bg_trajs: list[Trajectory]  # background batch with demos appended
    bg_log_q: np.ndarray
    log_w: np.ndarray
    weights: np.ndarray
    log_norm: float

    @property
    def ess(self) -> float:
        return effective_sample_size(self.weights)


def make_update_batch(model: BootstrapRewardModel, head: int,
                      demo_trajs: Sequence[Trajectory],
                      background: Sequence[tuple[Trajectory, float]]) -> IrlUpdateBatch:
    bg_trajs = [t for t, _ in background]
    bg_log_q = np.array([lq for _, lq in background], dtype=float)
    log_w = batch_returns(model, head, bg_trajs) - bg_log_q
    weights, log_norm = normalized_weights(log_w)
    return IrlUpdateBatch(demo_trajs=list(demo_trajs), bg_trajs=bg_trajs,
                          bg_log_q=bg_log_q, log_w=log_w, weights=weights,
                          log_norm=log_norm)


def batch_gradient(model: BootstrapRewardModel, head: int,
                   batch: IrlUpdateBatch, grads: nn.GradBuffer) -> None:
    """Accumulate the MAP objective gradient for the sampled head:
    mean demo reward gradient, minus the importance-weighted background term,
    plus the Gaussian prior term. Touches only the trunk and head `head`."""
    demo_X, _ = _stacked_features(batch.demo_trajs)
    bg_X, bg_offsets = _stacked_features(batch.bg_trajs)
    demo_w = np.full((len(demo_X), 1), 1.0 / len(batch.demo_trajs))
    step_w = np.repeat(batch.weights, np.diff(np.append(bg_offsets, len(bg_X))))
    X = np.vstack([demo_X, bg_X])
    out_grad = np.vstack([demo_w, -step_w[:, None]])
    nn.backward_batch(model.params, X, head, out_grad, grads)
    reward_mod.prior_grad(model, head, grads)


def batch_objective(model: BootstrapRewardModel, head: int,
                    demo_trajs: Sequence[Trajectory],
                    background: Sequence[tuple[Trajectory, float]]) -> float:
    """Explicit MAP batch objective whose gradient batch_gradient computes:
    mean demo return - logsumexp_j(R_j - log q_j) + log Gaussian prior."""
    demo_term = float(np.mean(batch_returns(model, head, demo_trajs)))
    bg_trajs = [t for t, _ in background]
    bg_log_q = np.array([lq for _, lq in background])
    log_w = batch_returns(model, head, bg_trajs) - bg_log_q
    prior = -sum(float(np.sum(t ** 2)) for t in model.params.head_tensors(head))
    prior /= 2.0 * model.prior_variance
    return demo_term - float(logsumexp(log_w)) + prior


def reward_update(model: BootstrapRewardModel, head: int,
                  demo_batch: Sequence[Trajectory],
                  background: Sequence[tuple[Trajectory, float]],
                  optimizer_state: nn.AdamState) -> dict:
    """One ascent step on the sampled head's parameters."""
    if not demo_batch or not background:
        raise ValueError("demo and background batches must be nonempty")
    batch = make_update_batch(model, head, demo_batch, background)
    grads = nn.GradBuffer.zeros_like(model.params)
    batch_gradient(model, head, batch, grads)
    nn.adam_step(model.params, grads, optimizer_state)
    return {"ess": batch.ess, "log_norm": batch.log_norm}


@dataclass
class TrainResult:
    model: BootstrapRewardModel
    policy: GaussianPolicy
    env: KinematicEnv
    log_rows: list[dict]


def train(demos: TrajectorySet, config: TrainConfig,
          rng: np.random.Generator) -> TrainResult:
    """Outer training loop: sample a head, roll out background trajectories,
    run the inner reward updates on the head's bootstrap batches, then update
    the sampling policy against the sampled head's reward."""
    config.validate()
    demo_list = list(demos)
    if not demo_list:
        raise ConfigError("demonstration set is empty")

    model = reward_mod.new_model(rng, len(demo_list), config.num_heads,
                                 config.prior_variance, config.trunk_widths)
    act_scale = 3.0 * max(float(np.max(np.abs(np.vstack([t.actions for t in demo_list])))),
                          1e-6)
    policy = policy_mod.new_policy(rng, config.prior_variance, config.trunk_widths,
                                   mean_scale=act_scale)
    env = policy_mod.env_from_demos(demo_list)
    buffer = BackgroundBuffer(config.buffer_capacity)
    reward_opt = nn.AdamState.for_params(model.params, lr=config.reward_learning_rate)
    policy_opt = PolicyOptimizer.create(policy, lr=config.policy_learning_rate)

    log_rows: list[dict] = []
    for it in range(1, config.outer_iterations + 1):
        t0 = time.perf_counter()
        reward_opt.lr = config.reward_learning_rate * config.reward_lr_decay ** (it - 1)
        head = reward_mod.sample_head(rng, model.K)
        rollouts = [policy_mod.rollout(policy, env, rng)
                    for _ in range(config.rollouts_per_iteration)]
        buffer.extend(rollouts)

        assignment = model.bootstrap_assignments[head]
        info = {"ess": float("nan")}
        demo_batch: list[Trajectory] = []
        for _ in range(config.inner_iterations):
            picks = assignment[rng.integers(0, len(assignment), size=config.demo_batch_size)]
            demo_batch = [demo_list[i] for i in picks]
            bg_records = buffer.sample(config.background_batch_size, rng)
            background = [(r.trajectory, r.total_log_q) for r in bg_records]
            background += [(t, float(policy_mod.traj_log_density(policy, t).sum()))
                           for t in demo_batch]
            info = reward_update(model, head, demo_batch, background, reward_opt)

        report = policy_mod.policy_update(
            policy, policy_opt, rollouts, model, head,
            discount=config.discount, kl_coeff=config.kl_coeff,
            n_steps=config.policy_update_steps)

        demo_ret = float(np.mean(batch_returns(model, head, demo_batch)))
        bg_ret = float(np.mean(batch_returns(model, head, [r.trajectory for r in rollouts])))
        log_rows.append({
            "iter": it, "head": head, "demo_return": demo_ret,
            "bg_return": bg_ret, "ess": info["ess"],
            "policy_kl": report["mean_kl"],
            "wall_ms": (time.perf_counter() - t0) * 1e3,
        })
    return TrainResult(model=model, policy=policy, env=env, log_rows=log_rows)


def write_training_log(path, rows: list[dict]) -> None:
    cols = TRAIN_LOG_HEADER.split(",")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRAIN_LOG_HEADER + "\n")
        for row in rows:
            fh.write(",".join(str(row[c]) for c in cols) + "\n")
