"""Trajectory-generating sampler: diagonal Gaussian policy over 2-D velocity
actions, deterministic kinematic integration, rollouts with recorded proposal
densities, and a KL-penalized policy-gradient update."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn, reward as reward_mod
from .core import ACTION_DIM, STATE_DIM, Source, Trajectory

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GaussianPolicy:
    params: nn.MlpParams  # mean network: state (5) -> action mean (2), single head
    log_std: np.ndarray  # (2,) state-independent
    mean_scale: float = np.inf  # tanh bound on the action mean; inf = unbounded

    def __post_init__(self):
        self.log_std = np.clip(np.asarray(self.log_std, dtype=float), LOG_STD_MIN, LOG_STD_MAX)
        if self.mean_scale <= 0:
            raise ValueError("mean_scale must be positive")


def new_policy(rng: np.random.Generator, sigma2: float = 0.1,
               widths: tuple[int, ...] = (64, 16),
               mean_scale: float = np.inf) -> GaussianPolicy:
    params = nn.init_params(rng, sigma2, widths, K=1, input_dim=STATE_DIM,
                            head_dim=ACTION_DIM)
    # Zero the output layer so the initial mean is identically zero: the
    # sampler starts as an unbiased random walk. A randomly-initialized mean
    # function is a bias of order one away from the data before any learning,
    # which immediately depresses the demonstrations' proposal densities.
    hw, hb = params.heads[0]
    hw[:] = 0.0
    hb[:] = 0.0
    return GaussianPolicy(params=params, log_std=np.zeros(ACTION_DIM),
                          mean_scale=mean_scale)


def action_mean(policy: GaussianPolicy, states: np.ndarray) -> np.ndarray:
    # The squash keeps the sampler's mean on the data's action scale; an
    # unbounded mean ratchets away from the demonstrations under the policy
    # gradient and destroys their proposal densities.
    out = nn.forward_batch(policy.params, states, head=0)
    if np.isfinite(policy.mean_scale):
        return policy.mean_scale * np.tanh(out / policy.mean_scale)
    return out


def log_density(policy: GaussianPolicy, states: np.ndarray,
                actions: np.ndarray) -> np.ndarray:
    """Per-step Gaussian log-pdf of `actions` under the policy at `states`."""
    mu = action_mean(policy, np.atleast_2d(states))
    actions = np.atleast_2d(actions)
    var = np.exp(2.0 * policy.log_std)
    z2 = (actions - mu) ** 2 / var
    return -0.5 * np.sum(z2 + 2.0 * policy.log_std + LOG_2PI, axis=1)


def act(policy: GaussianPolicy, state: np.ndarray,
        rng: np.random.Generator) -> tuple[np.ndarray, float]:
    mu = action_mean(policy, state[None, :])[0]
    std = np.exp(policy.log_std)
    action = mu + std * rng.standard_normal(ACTION_DIM)
    lq = float(log_density(policy, state[None, :], action[None, :])[0])
    return action, lq


@dataclass
class KinematicEnv:
    initial_states: np.ndarray  # (m, 5) empirical pool of demo initial states
    horizons: np.ndarray  # (m,) empirical pool of demo lengths
    dt: float
    pos_low: np.ndarray  # (2,) arena bounds; keeps rollouts on the demo scale
    pos_high: np.ndarray

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(self.initial_states) == 0 or len(self.horizons) == 0:
            raise ValueError("samplers must be nonempty")
        if np.any(self.pos_low >= self.pos_high):
            raise ValueError("degenerate arena bounds")


def env_from_demos(demos, dt: float | None = None) -> KinematicEnv:
    trajs = list(demos)
    initial = np.array([t.states[0] for t in trajs])
    horizons = np.array([len(t) for t in trajs], dtype=np.int64)
    if dt is None:
        diffs = np.concatenate([np.diff(t.times) for t in trajs if len(t) > 1])
        dt = float(np.median(diffs)) if len(diffs) else 1.0
    # Arena: demonstration position envelope plus a half-span margin. An
    # unbounded integrator lets the sampler escape the data scale entirely,
    # which destroys the importance weights.
    pos = np.vstack([t.states[:, :2] for t in trajs])
    lo, hi = pos.min(axis=0), pos.max(axis=0)
    pad = 0.5 * np.maximum(hi - lo, 1.0)
    return KinematicEnv(initial_states=initial, horizons=horizons, dt=dt,
                        pos_low=lo - pad, pos_high=hi + pad)


def step(env: KinematicEnv, state: np.ndarray, action: np.ndarray) -> np.ndarray:
    nxt = np.array(state, dtype=float)
    nxt[0] = min(max(nxt[0] + action[0] * env.dt, env.pos_low[0]), env.pos_high[0])
    nxt[1] = min(max(nxt[1] + action[1] * env.dt, env.pos_low[1]), env.pos_high[1])
    nxt[4] += env.dt
    return nxt


@dataclass
class RolloutRecord:
    trajectory: Trajectory
    step_log_q: np.ndarray  # (n,) per-step proposal log-densities

    def __post_init__(self):
        if len(self.step_log_q) != len(self.trajectory):
            raise ValueError("one log-density required per step")

    @property
    def total_log_q(self) -> float:
        return float(self.step_log_q.sum())


def rollout(policy: GaussianPolicy, env: KinematicEnv,
            rng: np.random.Generator, agent_id: str = "sampler") -> RolloutRecord:
    s = env.initial_states[int(rng.integers(0, len(env.initial_states)))].copy()
    horizon = int(env.horizons[int(rng.integers(0, len(env.horizons)))])
    states = np.empty((horizon, STATE_DIM))
    actions = np.empty((horizon, ACTION_DIM))
    log_qs = np.empty(horizon)
    for t in range(horizon):
        states[t] = s
        a, lq = act(policy, s, rng)
        actions[t] = a
        log_qs[t] = lq
        s = step(env, s, a)
    traj = Trajectory(agent_id=agent_id, states=states, actions=actions,
                      times=states[:, 4].copy(), source=Source.GENERATED)
    return RolloutRecord(trajectory=traj, step_log_q=log_qs)


def traj_log_density(policy: GaussianPolicy, traj: Trajectory) -> np.ndarray:
    """Per-step log q of a trajectory's recorded actions under the current
    policy (used when demonstrations are appended to a background batch)."""
    return log_density(policy, traj.states, traj.actions)


@dataclass
class PolicyOptimizer:
    # Plain SGD. An adaptive-moment optimizer rescales the REINFORCE noise to
    # full-size steps, so the mean network random-walks into its squash rails
    # even when the advantage signal is pure noise; with SGD the step size is
    # proportional to the actual gradient and a signal-free update stays put.
    lr: float

    @classmethod
    def create(cls, policy: GaussianPolicy, lr: float) -> "PolicyOptimizer":
        return cls(lr=lr)


def _discounted_rewards_to_go(rewards: np.ndarray, discount: float) -> np.ndarray:
    out = np.empty_like(rewards)
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + discount * acc
        out[i] = acc
    return out


def _gaussian_kl(mu_old, log_std_old, mu_new, log_std_new) -> np.ndarray:
    """Per-state KL(old || new) between diagonal Gaussians."""
    var_old = np.exp(2.0 * log_std_old)
    var_new = np.exp(2.0 * log_std_new)
    per_dim = (log_std_new - log_std_old
               + (var_old + (mu_old - mu_new) ** 2) / (2.0 * var_new) - 0.5)
    return per_dim.sum(axis=1)


def policy_update(policy: GaussianPolicy, opt: PolicyOptimizer,
                  rollouts: list[RolloutRecord], reward_model, head: int,
                  discount: float, kl_coeff: float,
                  n_steps: int = 5) -> dict:
    """Ascent on mean_t[A_t log pi(a_t|s_t)] - kl_coeff * KL(pi_old || pi_new).

    A_t is discounted reward-to-go under the sampled head's reward minus the
    batch mean. The KL penalty is taken against the policy as of entry, with
    n_steps penalized substeps reusing the batch.

    Only the mean network is updated. The log-std stays where it was
    initialized: letting REINFORCE shrink it collapses the sampler onto a
    near-deterministic policy, whose densities make the importance weights
    degenerate. A fixed exploration scale keeps the proposal usable for the
    whole run.
    """
    if not rollouts:
        raise ValueError("rollouts must be nonempty")
    states = np.vstack([r.trajectory.states for r in rollouts])
    actions = np.vstack([r.trajectory.actions for r in rollouts])
    advantages = []
    mean_returns = []
    for rec in rollouts:
        rews = reward_mod.head_rewards_batch(reward_model, reward_mod.traj_features(rec.trajectory), head)
        advantages.append(_discounted_rewards_to_go(rews, discount))
        mean_returns.append(float(rews.sum()))
    adv = np.concatenate(advantages)
    if not np.all(np.isfinite(adv)):
        raise FloatingPointError("non-finite advantage; policy update rejected")
    adv = adv - adv.mean()
    n = len(adv)

    mu_old = action_mean(policy, states).copy()
    log_std_old = policy.log_std.copy()
    grads = nn.GradBuffer.zeros_like(policy.params)

    var = np.exp(2.0 * policy.log_std)
    scale = policy.mean_scale
    for _ in range(n_steps):
        raw, acts = nn.forward_batch(policy.params, states, head=0, return_acts=True)
        mu = scale * np.tanh(raw / scale) if np.isfinite(scale) else raw
        g_mu = adv[:, None] * (actions - mu) / var / n
        g_mu -= kl_coeff * (mu - mu_old) / var / n
        if np.isfinite(scale):
            g_mu *= 1.0 - (mu / scale) ** 2  # chain rule through the squash
        grads.zero()
        nn.backward_batch(policy.params, states, 0, g_mu, grads, acts=acts)
        for (W, b), (gW, gb) in zip(policy.params.trunk + policy.params.heads,
                                    grads.trunk + grads.heads):
            W += opt.lr * gW
            b += opt.lr * gb

    mu_new = action_mean(policy, states)
    kl = _gaussian_kl(mu_old, log_std_old, mu_new, policy.log_std)
    return {"mean_kl": float(kl.mean()), "mean_return": float(np.mean(mean_returns))}
