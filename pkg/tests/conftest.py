"""Shared fixtures: tiny deterministic trajectories and seeded generators."""
import numpy as np
import pytest

from irlad.core import Source, Trajectory


def make_traj(rng, n=6, agent_id="a0", traj_id="t0", source=Source.DEMONSTRATION,
              dt=1.0):
    """Random but invariant-respecting trajectory of length n."""
    pos = np.cumsum(rng.normal(0.0, 0.5, size=(n, 2)), axis=0)
    times = np.arange(n, dtype=float) * dt
    states = np.column_stack([
        pos,
        np.full(n, pos[0, 0]),
        np.full(n, pos[0, 1]),
        times,
    ])
    actions = rng.normal(0.0, 1.0, size=(n, 2))
    return Trajectory(agent_id=agent_id, states=states, actions=actions,
                      times=times, source=source, traj_id=traj_id)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def trajs(rng):
    return [make_traj(rng, n=4 + i, traj_id=f"t{i}") for i in range(5)]
