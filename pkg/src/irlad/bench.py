"""Oracle-backed end-to-end benchmarks: sampled-vs-exact gradient agreement,
soft-policy/enumeration equivalence, gridworld reward recovery, and synthetic
two-agent detection. Shared by the acceptance tests and the bench-oracle
CLI command."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from . import evaluation, irl, oracle, reward as reward_mod, scoring
from .core import Label, SetRole, Source, TrainConfig, Trajectory, TrajectorySet
from .oracle import DiscreteMdp

GRID_MOVES = [(0, 1), (1, 0), (0, -1), (-1, 0)]  # N, E, S, W as (dx, dy)


# Embedding scale for grid cells and steps. Keeping the continuous problem
# small (quarter-unit cells, quarter-second steps) keeps per-step log-weight
# spreads small, which the exp() importance weights amplify exponentially.
GRID_CELL = 0.25
GRID_DT = 0.25


def discrete_to_trajectory(path: tuple, width: int, agent_id: str,
                           traj_id: str = "", cell: float = GRID_CELL,
                           dt: float = GRID_DT) -> Trajectory:
    """Embed a discrete gridworld path into the continuous 5-dim state /
    velocity-action schema: cell indices become coordinates scaled by `cell`,
    the chosen direction becomes a velocity of one cell per step."""
    n = len(path)
    states = np.empty((n, 5))
    actions = np.empty((n, 2))
    x0 = y0 = None
    for t, (s, a) in enumerate(path):
        x, y = (s % width) * cell, (s // width) * cell
        if t == 0:
            x0, y0 = x, y
        states[t] = (x, y, x0, y0, t * dt)
        actions[t] = np.array(GRID_MOVES[a], dtype=float) * cell / dt
    return Trajectory(agent_id=agent_id, states=states, actions=actions,
                      times=states[:, 4].copy(), source=Source.DEMONSTRATION,
                      traj_id=traj_id)


def grid_eval_features(mdp: DiscreteMdp, width: int,
                       contexts: list[tuple[float, float, float]],
                       cell: float = GRID_CELL,
                       dt: float = GRID_DT) -> np.ndarray:
    """(S*A*len(contexts), 7) reward-network inputs covering every state-action
    pair at each (x0, y0, t) trajectory context, grouped so that reshaping to
    (S*A, len(contexts)) and averaging gives context-marginalized rewards."""
    if not contexts:
        raise ValueError("at least one evaluation context required")
    rows = []
    for s in range(mdp.num_states):
        x, y = (s % width) * cell, (s // width) * cell
        for a in range(mdp.num_actions):
            dx, dy = GRID_MOVES[a]
            for cx, cy, ct in contexts:
                rows.append([x, y, cx, cy, ct, dx * cell / dt, dy * cell / dt])
    return np.array(rows, dtype=float)


def make_demo_set(mdp: DiscreteMdp, width: int, n: int, rng: np.random.Generator,
                  agent_id: str) -> TrajectorySet:
    table = oracle.soft_value_iteration(mdp, mdp.reward)
    paths = oracle.sample_soft_trajectories(mdp, table, n, rng)
    trajs = [discrete_to_trajectory(p, width, agent_id, traj_id=f"{agent_id}_{i}")
             for i, p in enumerate(paths)]
    return TrajectorySet(trajs, role=SetRole.DEMONSTRATION_SET)


# ---------------------------------------------------------------------------
# Sampled-vs-exact gradient agreement on a random tiny MDP
# ---------------------------------------------------------------------------

def random_mdp(rng: np.random.Generator, S: int = 4, A: int = 2, H: int = 5) -> DiscreteMdp:
    T = rng.dirichlet(np.ones(S), size=(S, A))
    p0 = rng.dirichlet(np.ones(S))
    return DiscreteMdp(transitions=T, p0=p0, horizon=H)


def sampled_gradient(mdp: DiscreteMdp, theta: np.ndarray, n_rollouts: int,
                     rng: np.random.Generator,
                     corrupt: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Self-normalized importance-sampling estimate of E_{p_theta}[counts]
    using a uniform-random proposal policy, plus its per-coordinate standard
    error. `corrupt` adds a deliberate bias (negative-control hook)."""
    S, A, H = mdp.num_states, mdp.num_actions, mdp.horizon
    log_q_step = -np.log(A)
    counts = np.zeros((n_rollouts, S, A))
    log_w = np.empty(n_rollouts)
    for j in range(n_rollouts):
        s = int(rng.choice(S, p=mdp.p0))
        ret = 0.0
        for t in range(H):
            a = int(rng.integers(0, A))
            counts[j, s, a] += 1
            ret += theta[s, a]
            if t < H - 1:
                s = int(rng.choice(S, p=mdp.transitions[s, a]))
        log_w[j] = ret - H * log_q_step
    weights, _ = irl.normalized_weights(log_w)
    flat = counts.reshape(n_rollouts, -1)
    est = weights @ flat
    se = np.sqrt(np.einsum("j,jd->d", weights ** 2, (flat - est) ** 2))
    return est.reshape(S, A) + corrupt, se.reshape(S, A)


def run_gradient_agreement(seed: int = 0, n_rollouts: int = 10_000,
                           corrupt: float = 0.0) -> dict:
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng)
    theta = rng.normal(size=(mdp.num_states, mdp.num_actions))
    # Exact demo weighting over the full Boltzmann distribution so the check
    # isolates the partition-function term.
    probs, _ = oracle.enumerate_traj_distribution(mdp, theta)
    demos = list(probs.keys())
    demo_w = np.array([probs[k] for k in demos])
    exact = oracle.exact_gradient(mdp, theta, demos, demo_weights=demo_w)

    demo_term = np.zeros_like(theta)
    for traj, w in zip(demos, demo_w / demo_w.sum()):
        for s, a in traj:
            demo_term[s, a] += w
    est, se = sampled_gradient(mdp, theta, n_rollouts, rng, corrupt=corrupt)
    sampled = demo_term - est
    z = np.abs(sampled - exact) / np.maximum(se, 1e-12)
    return {"passed": bool(np.all(z <= 3.0)), "max_z": float(z.max()),
            "sampled": sampled, "exact": exact, "se": se}


# ---------------------------------------------------------------------------
# Soft-policy / enumeration equivalence fixtures
# ---------------------------------------------------------------------------

def equivalence_fixtures() -> list[tuple[str, DiscreteMdp, np.ndarray]]:
    fixtures = []
    # 3-state chain with goal reward at the end.
    T = np.zeros((3, 2, 3))
    for s in range(3):
        T[s, 0, min(s + 1, 2)] = 1.0  # forward
        T[s, 1, max(s - 1, 0)] = 1.0  # backward
    r = np.zeros((3, 2))
    r[2, :] = 1.0
    p0 = np.array([1.0, 0.0, 0.0])
    fixtures.append(("chain3", DiscreteMdp(T, p0, horizon=3), r))
    # Random deterministic 4-state 2-action MDP with a stochastic start.
    # The soft-VI backup matches the Boltzmann path distribution only under
    # deterministic dynamics, so the equivalence fixtures stay deterministic.
    rng = np.random.default_rng(7)
    T = np.zeros((4, 2, 4))
    for s in range(4):
        for a in range(2):
            T[s, a, rng.integers(0, 4)] = 1.0
    p0 = rng.dirichlet(np.ones(4))
    fixtures.append(("random4x2", DiscreteMdp(T, p0, horizon=5),
                     rng.normal(size=(4, 2))))
    # 2x2 gridworld without slip (|S|*|A| = 16 within the enumeration guard).
    gw = oracle.make_gridworld(2, 2, goals=[(1, 1)], noise=0.0, horizon=4,
                               start_states=[(0, 0)])
    fixtures.append(("grid2x2", gw, gw.reward))
    return fixtures


def run_soft_vi_equivalence(tol: float = 1e-10) -> dict:
    worst = 0.0
    for name, mdp, r in equivalence_fixtures():
        table = oracle.soft_value_iteration(mdp, r)
        rho_vi = oracle.occupancy(mdp, table)
        probs, _ = oracle.enumerate_traj_distribution(mdp, r)
        rho_enum = oracle.enumeration_marginals(
            probs, mdp.num_states, mdp.num_actions, mdp.horizon)
        worst = max(worst, float(np.abs(rho_vi - rho_enum).max()))
    return {"passed": worst <= tol, "max_err": worst}


# ---------------------------------------------------------------------------
# Gridworld benchmarks: reward recovery and synthetic detection
# ---------------------------------------------------------------------------

GRID_W = GRID_H = 5
RECOVERY_GOAL = (4, 4)
RECOVERY_SHARPNESS = 8.0
GOAL_NE = (4, 4)
GOAL_SW = (0, 0)
DETECTION_REWARD_SCALE = 8.0
# Short horizon for the same reason as the small embedding scale: trajectory
# log-weights grow linearly in the horizon, the weights exponentially.
GRID_HORIZON = 2


def graded_gridworld(width: int, height: int, goal: tuple[int, int],
                     noise: float, horizon: int,
                     sharpness: float = RECOVERY_SHARPNESS) -> DiscreteMdp:
    """Gridworld whose true reward is a graded, action-dependent field:
    r(s, a) = exp(-d^2(next(s, a), goal) / sharpness). Grading matters for
    rank-correlation checks: a binary goal reward is tie-dominated, and ties
    cap the attainable Spearman score against any smooth learned reward."""
    mdp = oracle.make_gridworld(width, height, goals=[goal], noise=noise,
                                horizon=horizon)
    gx, gy = goal

    def field(x, y):
        return np.exp(-((x - gx) ** 2 + (y - gy) ** 2) / sharpness)

    r = np.empty((width * height, len(GRID_MOVES)))
    for s in range(width * height):
        x, y = s % width, s // width
        for a, (dx, dy) in enumerate(GRID_MOVES):
            nx = min(max(x + dx, 0), width - 1)
            ny = min(max(y + dy, 0), height - 1)
            r[s, a] = field(nx, ny)
    mdp.reward = r
    return mdp


def bench_train_config(seed: int, outer_iterations: int = 200) -> TrainConfig:
    # Hyperparameters fixed by the recovery sweep that locked the 0.7 floor:
    # a wide prior (the 0.1 default over-shrinks this small problem under
    # Adam), large batches for stable importance weights, and an exponential
    # reward-lr decay to hold the early rank-correlation peak.
    return TrainConfig(prior_variance=3.0,
                       outer_iterations=outer_iterations,
                       inner_iterations=20,
                       demo_batch_size=64,
                       background_batch_size=512,
                       rollouts_per_iteration=40,
                       reward_learning_rate=1e-3,
                       reward_lr_decay=0.96,
                       policy_learning_rate=3e-3,
                       seed=seed)


def recovery_contexts(horizon: int) -> list[tuple[float, float, float]]:
    """Initial-position/time contexts the learned reward is marginalized over
    when compared against the (context-free) true grid reward."""
    return [(cx * GRID_CELL, cy * GRID_CELL, ct * GRID_DT)
            for cx in (0, 2, 4) for cy in (0, 2, 4)
            for ct in sorted({1, max(1, horizon // 2)})]


def run_recovery(seed: int = 0, n_demos: int = 500,
                 outer_iterations: int = 200) -> dict:
    rng = np.random.default_rng(seed)
    mdp = graded_gridworld(GRID_W, GRID_H, goal=RECOVERY_GOAL, noise=0.1,
                           horizon=GRID_HORIZON)
    demos = make_demo_set(mdp, GRID_W, n_demos, rng, agent_id="target")
    config = bench_train_config(seed, outer_iterations)
    result = irl.train(demos, config, rng)
    contexts = recovery_contexts(GRID_HORIZON)
    X = grid_eval_features(mdp, GRID_W, contexts)
    learned, _ = reward_mod.mean_and_variance_batch(result.model, X)
    learned = learned.reshape(-1, len(contexts)).mean(axis=1)
    true = mdp.reward.reshape(-1)
    rho = float(spearmanr(learned, true).statistic)
    return {"passed": rho >= 0.7, "spearman": rho, "result": result, "mdp": mdp}


def run_detection(seed: int = 0, n_demos: int = 500, n_test_normal: int = 90,
                  outer_iterations: int = 200, rate: float = 0.1) -> dict:
    rng = np.random.default_rng(seed)
    # Graded fields rather than goal blocks: at this short horizon a sparse
    # goal reward leaves the soft policy near-uniform away from the goal, so
    # the two agents' trajectories barely differ and neither would a perfect
    # detector separate them.
    mdp_a = graded_gridworld(GRID_W, GRID_H, goal=GOAL_NE, noise=0.1,
                             horizon=GRID_HORIZON)
    mdp_b = graded_gridworld(GRID_W, GRID_H, goal=GOAL_SW, noise=0.1,
                             horizon=GRID_HORIZON)
    # Sharpen the soft policies: at unit reward scale both agents act close
    # to uniformly, so their trajectory distributions overlap and no scorer
    # can separate them.  Scaling the field acts as an inverse temperature.
    mdp_a.reward = mdp_a.reward * DETECTION_REWARD_SCALE
    mdp_b.reward = mdp_b.reward * DETECTION_REWARD_SCALE
    demos = make_demo_set(mdp_a, GRID_W, n_demos + n_test_normal, rng, agent_id="agent_a")
    train_set = TrajectorySet(demos.trajectories[:n_demos], role=SetRole.DEMONSTRATION_SET)
    held_out = TrajectorySet(demos.trajectories[n_demos:], role=SetRole.TEST_SET)
    n_inject = int(round(rate * len(held_out.trajectories) / (1.0 - rate)))
    donors = make_demo_set(mdp_b, GRID_W, n_inject + 5, rng, agent_id="agent_b")
    from .data import inject_anomalies
    test_set = inject_anomalies(held_out, donors, rate, rng)

    config = bench_train_config(seed, outer_iterations)
    result = irl.train(train_set, config, rng)
    stats = scoring.fit_stats(result.model, train_set)
    scores = np.array([scoring.traj_normality(result.model, stats, t) for t in test_set])
    labels = [t.label for t in test_set]
    sweep = evaluation.threshold_sweep(scores, labels, np.array([scoring.DEFAULT_EPSILON]))
    return {"passed": sweep["area"] >= 0.9, "area": sweep["area"],
            "result": result, "stats": stats, "test_set": test_set,
            "scores": scores}


def run_all(seed: int = 0, outer_iterations: int = 200) -> list[dict]:
    checks = []
    r = run_soft_vi_equivalence()
    checks.append({"name": "soft-vi-enumeration-equivalence", **r,
                   "detail": f"max marginal error {r['max_err']:.2e}"})
    r = run_gradient_agreement(seed=seed)
    checks.append({"name": "gradient-agreement", "passed": r["passed"],
                   "detail": f"max |z| {r['max_z']:.2f} (limit 3)"})
    r = run_recovery(seed=seed, outer_iterations=outer_iterations)
    checks.append({"name": "reward-recovery", "passed": r["passed"],
                   "detail": f"spearman {r['spearman']:.3f} (floor 0.7)"})
    r = run_detection(seed=seed, outer_iterations=outer_iterations)
    checks.append({"name": "synthetic-detection", "passed": r["passed"],
                   "detail": f"sweep area {r['area']:.3f} (floor 0.9)"})
    return checks
