"""Shared domain types: state-action observations, trajectories, trajectory
sets, training configuration, and the canonical on-disk trajectory format.

State layout (5 dims): [lon, lat, initial_lon, initial_lat, elapsed_seconds].
Action layout (2 dims): velocity [d_lon/dt, d_lat/dt] in units per second.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterator, Sequence

import numpy as np

STATE_DIM = 5
ACTION_DIM = 2


class Label(Enum):
    NORMAL = 0
    ANOMALY = 1
    UNLABELED = -1


class Source(Enum):
    DEMONSTRATION = "demonstration"
    GENERATED = "generated"


class SetRole(Enum):
    DEMONSTRATION_SET = "demonstration"
    BACKGROUND_SET = "background"
    TEST_SET = "test"


class TrajectoryError(ValueError):
    """Base class for trajectory invariant violations."""


class NonFiniteValue(TrajectoryError):
    pass


class NonMonotoneTime(TrajectoryError):
    pass


class BadInitialState(TrajectoryError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StateAction:
    state: np.ndarray  # (5,)
    action: np.ndarray  # (2,)
    timestamp: float  # seconds since trajectory start

    def __post_init__(self):
        object.__setattr__(self, "state", np.asarray(self.state, dtype=float))
        object.__setattr__(self, "action", np.asarray(self.action, dtype=float))


@dataclass(frozen=True)
class Trajectory:
    """Ordered sequence of state-action pairs, stored column-wise as arrays."""

    agent_id: str
    states: np.ndarray  # (n, 5)
    actions: np.ndarray  # (n, 2)
    times: np.ndarray  # (n,) seconds since start
    label: Label = Label.UNLABELED
    source: Source = Source.DEMONSTRATION
    traj_id: str = ""

    def __post_init__(self):
        states = np.ascontiguousarray(np.asarray(self.states, dtype=float))
        actions = np.ascontiguousarray(np.asarray(self.actions, dtype=float))
        times = np.ascontiguousarray(np.asarray(self.times, dtype=float))
        if states.ndim != 2 or states.shape[1] != STATE_DIM:
            raise TrajectoryError(f"states must be (n, {STATE_DIM}), got {states.shape}")
        if actions.shape != (states.shape[0], ACTION_DIM):
            raise TrajectoryError(f"actions must be (n, {ACTION_DIM}), got {actions.shape}")
        if times.shape != (states.shape[0],):
            raise TrajectoryError(f"times must be (n,), got {times.shape}")
        if states.shape[0] < 1:
            raise TrajectoryError("trajectory must contain at least one observation")
        for a in (states, actions, times):
            a.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return self.states.shape[0]

    def observations(self) -> Iterator[StateAction]:
        for i in range(len(self)):
            yield StateAction(self.states[i], self.actions[i], float(self.times[i]))

    def with_label(self, label: Label) -> "Trajectory":
        return replace(self, label=label)


@dataclass
class TrajectorySet:
    trajectories: list[Trajectory]
    role: SetRole = SetRole.DEMONSTRATION_SET

    def __post_init__(self):
        if self.role is SetRole.DEMONSTRATION_SET:
            bad = [t.traj_id for t in self.trajectories if t.source is not Source.DEMONSTRATION]
            if bad:
                raise TrajectoryError(f"demonstration set contains generated trajectories: {bad}")
        if self.role is SetRole.BACKGROUND_SET:
            bad = [t.traj_id for t in self.trajectories if t.source is not Source.GENERATED]
            if bad:
                raise TrajectoryError(f"background set contains non-generated trajectories: {bad}")

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)


@dataclass
class TrainConfig:
    num_heads: int = 10
    prior_variance: float = 0.1
    outer_iterations: int = 200
    inner_iterations: int = 10
    demo_batch_size: int = 32
    background_batch_size: int = 128
    rollouts_per_iteration: int = 10
    discount: float = 0.99  # policy optimization only; IRL returns stay undiscounted
    reward_learning_rate: float = 1e-3
    reward_lr_decay: float = 1.0  # per-outer-iteration multiplicative decay
    policy_learning_rate: float = 1e-3
    kl_coeff: float = 1.0
    policy_update_steps: int = 5
    trunk_widths: tuple[int, ...] = (64, 16)
    buffer_capacity: int = 50_000
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.num_heads < 1:
            raise ConfigError("num_heads must be >= 1")
        if self.prior_variance <= 0:
            raise ConfigError("prior_variance must be positive")
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError("discount must be in [0, 1)")
        for name in ("inner_iterations", "demo_batch_size", "background_batch_size",
                     "rollouts_per_iteration", "policy_update_steps", "buffer_capacity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.outer_iterations < 0:
            raise ConfigError("outer_iterations must be >= 0")
        if self.reward_learning_rate <= 0 or self.policy_learning_rate <= 0:
            raise ConfigError("learning rates must be positive")
        if not 0.0 < self.reward_lr_decay <= 1.0:
            raise ConfigError("reward_lr_decay must be in (0, 1]")
        return self


def traj_return(traj: Trajectory, reward: Callable[[np.ndarray, np.ndarray], float]) -> float:
    """Undiscounted sum of per-step rewards along the trajectory."""
    total = 0.0
    for i in range(len(traj)):
        r = float(reward(traj.states[i], traj.actions[i]))
        if not np.isfinite(r):
            raise NonFiniteValue(f"non-finite reward {r!r} at step {i}")
        total += r
    return total


def validate_trajectory(traj: Trajectory) -> Trajectory:
    """Check the StateAction invariants; returns the trajectory or raises the
    first violated invariant."""
    if not np.all(np.isfinite(traj.states)):
        idx = int(np.argwhere(~np.isfinite(traj.states).all(axis=1))[0, 0])
        raise NonFiniteValue(f"non-finite state at step {idx}")
    if not np.all(np.isfinite(traj.actions)):
        idx = int(np.argwhere(~np.isfinite(traj.actions).all(axis=1))[0, 0])
        raise NonFiniteValue(f"non-finite action at step {idx}")
    elapsed = traj.states[:, 4]
    if elapsed[0] < 0 or np.any(elapsed < 0):
        raise NonMonotoneTime("negative elapsed_seconds")
    diffs = np.diff(elapsed)
    if np.any(diffs < 0):
        idx = int(np.argwhere(diffs < 0)[0, 0]) + 1
        raise NonMonotoneTime(f"elapsed_seconds decreases at index {idx}")
    first = traj.states[0]
    if first[4] != 0.0:
        raise BadInitialState("first observation must have elapsed_seconds = 0")
    if not (first[0] == first[2] and first[1] == first[3]):
        raise BadInitialState("first observation's initial location must equal its own location")
    return traj


# ---------------------------------------------------------------------------
# Canonical on-disk trajectory format: one file per trajectory set,
# line-oriented CSV with header
#   agent_id,traj_id,t_seconds,lon,lat,v_lon,v_lat,label
# label in {0, 1, -1} for Normal/Anomaly/Unlabeled.
# ---------------------------------------------------------------------------

CSV_HEADER = "agent_id,traj_id,t_seconds,lon,lat,v_lon,v_lat,label"


def _fmt(x: float) -> str:
    return np.format_float_positional(x, unique=True, trim="0")


def format_trajectory_lines(traj: Trajectory) -> list[str]:
    lines = []
    for i in range(len(traj)):
        s = traj.states[i]
        a = traj.actions[i]
        lines.append(
            f"{traj.agent_id},{traj.traj_id},{_fmt(traj.times[i])},"
            f"{_fmt(s[0])},{_fmt(s[1])},{_fmt(a[0])},{_fmt(a[1])},{traj.label.value}"
        )
    return lines


def write_trajectories(path, trajectories: Sequence[Trajectory]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for traj in trajectories:
            for line in format_trajectory_lines(traj):
                fh.write(line + "\n")


def parse_canonical_row(line: str) -> tuple[str, str, float, float, float, float, float, Label]:
    parts = line.rstrip("\n").split(",")
    if len(parts) != 8:
        raise TrajectoryError(f"expected 8 fields, got {len(parts)}: {line!r}")
    agent_id, traj_id = parts[0], parts[1]
    try:
        t, lon, lat, vlon, vlat = (float(p) for p in parts[2:7])
        label = Label(int(parts[7]))
    except ValueError as exc:
        raise TrajectoryError(f"bad canonical row {line!r}: {exc}") from exc
    return agent_id, traj_id, t, lon, lat, vlon, vlat, label


def read_trajectories(path, source: Source = Source.DEMONSTRATION) -> list[Trajectory]:
    """Read the canonical format; groups consecutive rows by traj_id and
    reconstructs the 5-dim state from each trajectory's first location."""
    groups: list[tuple[str, str, Label, list[tuple[float, float, float, float, float]]]] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise TrajectoryError(f"bad header in {path}: {header!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                agent_id, traj_id, t, lon, lat, vlon, vlat, label = parse_canonical_row(line)
            except TrajectoryError as exc:
                raise TrajectoryError(f"{path}:{lineno}: {exc}") from exc
            if not groups or groups[-1][1] != traj_id or groups[-1][0] != agent_id:
                groups.append((agent_id, traj_id, label, []))
            groups[-1][3].append((t, lon, lat, vlon, vlat))
    out = []
    for agent_id, traj_id, label, rows in groups:
        arr = np.array(rows, dtype=float)
        times = arr[:, 0]
        lonlat = arr[:, 1:3]
        states = np.column_stack([
            lonlat,
            np.full(len(arr), lonlat[0, 0]),
            np.full(len(arr), lonlat[0, 1]),
            times,
        ])
        out.append(Trajectory(
            agent_id=agent_id, states=states, actions=arr[:, 3:5], times=times,
            label=label, source=source, traj_id=traj_id,
        ))
    return out
