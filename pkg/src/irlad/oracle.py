"""Brute-force ground truth on tiny discrete MDPs: exact soft-optimal
policies, exact Boltzmann trajectory distribution, exact likelihood gradient,
and a gridworld generator. Verification backbone for the sample-based
training engine."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

MAX_SA = 20  # enumeration guard: |S| * |A| <= MAX_SA
MAX_H = 8


class InstanceTooLarge(ValueError):
    pass


@dataclass
class DiscreteMdp:
    transitions: np.ndarray  # (S, A, S) row-stochastic in the last axis
    p0: np.ndarray  # (S,)
    horizon: int
    reward: np.ndarray | None = None  # optional true reward table (S, A)

    def __post_init__(self):
        T = np.asarray(self.transitions, dtype=float)
        sums = T.sum(axis=2)
        if not np.allclose(sums, 1.0, atol=1e-12):
            raise ValueError("each T(s,a,.) must sum to 1")
        if not np.isclose(self.p0.sum(), 1.0, atol=1e-12):
            raise ValueError("p0 must sum to 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]


@dataclass
class SoftPolicyTable:
    pi: np.ndarray  # (H, S, A)
    V: np.ndarray  # (H, S)
    Q: np.ndarray  # (H, S, A)


def soft_value_iteration(mdp: DiscreteMdp, reward_table: np.ndarray,
                         H: int | None = None) -> SoftPolicyTable:
    """Finite-horizon backward recursion:
    Q_t = r + T V_{t+1},  V_t = logsumexp_a Q_t,  pi_t = exp(Q_t - V_t)."""
    H = mdp.horizon if H is None else H
    S, A = mdp.num_states, mdp.num_actions
    r = np.asarray(reward_table, dtype=float)
    Q = np.empty((H, S, A))
    V = np.empty((H, S))
    pi = np.empty((H, S, A))
    v_next = np.zeros(S)
    for t in range(H - 1, -1, -1):
        Q[t] = r + mdp.transitions @ v_next
        V[t] = logsumexp(Q[t], axis=1)
        pi[t] = np.exp(Q[t] - V[t][:, None])
        v_next = V[t]
    return SoftPolicyTable(pi=pi, V=V, Q=Q)


def occupancy(mdp: DiscreteMdp, table: SoftPolicyTable) -> np.ndarray:
    """(H, S, A) exact per-step state-action visitation probabilities of the
    soft-optimal policy."""
    H = table.pi.shape[0]
    rho = np.empty_like(table.pi)
    # The Boltzmann trajectory distribution tilts the initial marginal by
    # exp(V_0): p(s_0) ~ p0(s_0) exp(V_0(s_0)).
    with np.errstate(divide="ignore"):
        log_d = np.log(mdp.p0) + table.V[0]
    d = np.exp(log_d - logsumexp(log_d[np.isfinite(log_d)]))
    d[~np.isfinite(log_d)] = 0.0
    for t in range(H):
        rho[t] = d[:, None] * table.pi[t]
        d = np.einsum("sa,sax->x", rho[t], mdp.transitions)
    return rho


def _guard(mdp: DiscreteMdp, H: int) -> None:
    if mdp.num_states * mdp.num_actions > MAX_SA or H > MAX_H:
        raise InstanceTooLarge(
            f"enumeration limited to |S|*|A| <= {MAX_SA}, H <= {MAX_H}; "
            f"got {mdp.num_states}*{mdp.num_actions}, H={H}")


def enumerate_traj_distribution(mdp: DiscreteMdp, reward_table: np.ndarray,
                                H: int | None = None):
    """Exact Boltzmann trajectory distribution p(tau) ~ p0 * prod T * exp(R).

    Returns (probs, Z) where probs maps each length-H tuple of (s, a) pairs
    to its probability and Z is the dynamics-weighted partition function.
    """
    H = mdp.horizon if H is None else H
    _guard(mdp, H)
    r = np.asarray(reward_table, dtype=float)
    T = mdp.transitions
    scores: dict[tuple, float] = {}

    def extend(path, s, log_dyn, ret, t):
        for a in range(mdp.num_actions):
            new_path = path + ((s, a),)
            new_ret = ret + r[s, a]
            if t == H - 1:
                scores[new_path] = log_dyn + new_ret
            else:
                for s2 in range(mdp.num_states):
                    p = T[s, a, s2]
                    if p > 0.0:
                        extend(new_path, s2, log_dyn + np.log(p), new_ret, t + 1)

    for s0 in range(mdp.num_states):
        if mdp.p0[s0] > 0.0:
            extend((), s0, float(np.log(mdp.p0[s0])), 0.0, 0)

    keys = list(scores.keys())
    logs = np.array([scores[k] for k in keys])
    log_z = float(logsumexp(logs))
    probs = {k: float(np.exp(v - log_z)) for k, v in zip(keys, logs)}
    return probs, float(np.exp(log_z))


def enumeration_marginals(probs: dict, S: int, A: int, H: int) -> np.ndarray:
    """(H, S, A) per-step state-action marginals of an enumerated distribution."""
    rho = np.zeros((H, S, A))
    for path, p in probs.items():
        for t, (s, a) in enumerate(path):
            rho[t, s, a] += p
    return rho


def exact_gradient(mdp: DiscreteMdp, reward_table: np.ndarray,
                   demos: list[tuple] | list, demo_weights: np.ndarray | None = None,
                   H: int | None = None) -> np.ndarray:
    """Exact MaxEnt likelihood gradient for a tabular reward:
    E_demo[counts] - E_{soft pi}[counts], both per trajectory."""
    H = mdp.horizon if H is None else H
    _guard(mdp, H)
    S, A = mdp.num_states, mdp.num_actions
    demo_term = np.zeros((S, A))
    if demo_weights is None:
        demo_weights = np.full(len(demos), 1.0 / len(demos))
    else:
        demo_weights = np.asarray(demo_weights, dtype=float)
        demo_weights = demo_weights / demo_weights.sum()
    for traj, w in zip(demos, demo_weights):
        for s, a in traj:
            demo_term[s, a] += w
    # Model term: exact expected counts under the Boltzmann trajectory
    # distribution. Computed by enumeration; the soft-VI occupancy coincides
    # with it only for deterministic dynamics.
    probs, _ = enumerate_traj_distribution(mdp, reward_table, H)
    model_term = enumeration_marginals(probs, S, A, H).sum(axis=0)
    return demo_term - model_term


def sample_soft_trajectories(mdp: DiscreteMdp, table: SoftPolicyTable,
                             n: int, rng: np.random.Generator) -> list[tuple]:
    """Sample trajectories by rolling the soft policy through the dynamics."""
    H = table.pi.shape[0]
    out = []
    for _ in range(n):
        s = int(rng.choice(mdp.num_states, p=mdp.p0))
        path = []
        for t in range(H):
            a = int(rng.choice(mdp.num_actions, p=table.pi[t, s]))
            path.append((s, a))
            if t < H - 1:
                s = int(rng.choice(mdp.num_states, p=mdp.transitions[s, a]))
        out.append(tuple(path))
    return out


def make_gridworld(width: int, height: int, goals: list[tuple[int, int]],
                   noise: float, horizon: int = 8,
                   start_states: list[tuple[int, int]] | None = None,
                   step_cost: float = -0.01, goal_reward: float = 1.0) -> DiscreteMdp:
    """4-action gridworld with slip probability `noise` spread uniformly over
    the four directions; bumping a wall stays in place. True reward is
    goal_reward at goal cells, step_cost elsewhere (state-based)."""
    if width * height > 64:
        raise ValueError("gridworld limited to width*height <= 64")
    if not goals:
        raise ValueError("at least one goal cell required")
    for x, y in goals:
        if not (0 <= x < width and 0 <= y < height):
            raise ValueError(f"goal {(x, y)} outside the {width}x{height} grid")
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must be in [0, 1]")
    S = width * height
    A = 4
    moves = [(0, 1), (1, 0), (0, -1), (-1, 0)]  # N, E, S, W as (dx, dy)

    def idx(x, y):
        return y * width + x

    def clipped(x, y, dx, dy):
        nx, ny = x + dx, y + dy
        if 0 <= nx < width and 0 <= ny < height:
            return idx(nx, ny)
        return idx(x, y)

    T = np.zeros((S, A, S))
    for y in range(height):
        for x in range(width):
            s = idx(x, y)
            for a, (dx, dy) in enumerate(moves):
                T[s, a, clipped(x, y, dx, dy)] += 1.0 - noise
                for dx2, dy2 in moves:
                    T[s, a, clipped(x, y, dx2, dy2)] += noise / 4.0

    goal_idx = {idx(x, y) for x, y in goals}
    r = np.full((S, A), step_cost)
    for s in goal_idx:
        r[s, :] = goal_reward

    p0 = np.zeros(S)
    if start_states is None:
        p0[:] = 1.0 / S
    else:
        for x, y in start_states:
            p0[idx(x, y)] += 1.0 / len(start_states)
    return DiscreteMdp(transitions=T, p0=p0, horizon=horizon, reward=r)
