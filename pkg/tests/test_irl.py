"""Importance weighting, the MAP batch gradient against finite differences,
and the outer training loop."""
import numpy as np
import pytest

from irlad import irl, nn, policy, reward
from irlad.core import ConfigError, SetRole, TrainConfig, TrajectorySet, traj_return

from conftest import make_traj


def _small_model(rng, n_demos=6, K=3):
    return reward.new_model(rng, n_demos, K, prior_variance=0.1,
                            widths=(8, 4))


def _background(rng, trajs, spread=1.0):
    return [(t, float(rng.normal(scale=spread))) for t in trajs]


def test_normalized_weights_sum_to_one(rng):
    log_w = rng.normal(scale=30.0, size=64)  # extreme spread: log-domain path
    w, log_norm = irl.normalized_weights(log_w)
    assert abs(w.sum() - 1.0) < 1e-12
    assert np.all(w >= 0)
    assert np.isfinite(log_norm)


def test_normalized_weights_empty():
    with pytest.raises(ValueError):
        irl.normalized_weights(np.array([]))


def test_importance_weights_match_definition(rng, trajs):
    model = _small_model(rng)
    batch = _background(rng, trajs)
    w = irl.importance_weights(
        batch, lambda s, a: reward.head_reward(model, s, a, 0))
    log_w = np.array([traj_return(t, lambda s, a: reward.head_reward(model, s, a, 0)) - lq
                      for t, lq in batch])
    expect = np.exp(log_w - np.max(log_w))
    expect /= expect.sum()
    np.testing.assert_allclose(w, expect, atol=1e-12)


def test_effective_sample_size_limits():
    # [TRIVIAL] uniform weights give n; a point mass gives 1
    n = 16
    assert abs(irl.effective_sample_size(np.full(n, 1.0 / n)) - n) < 1e-9
    one_hot = np.zeros(n)
    one_hot[3] = 1.0
    assert abs(irl.effective_sample_size(one_hot) - 1.0) < 1e-12


def test_batch_returns_match_traj_return(rng, trajs):
    model = _small_model(rng)
    got = irl.batch_returns(model, 1, trajs)
    expect = [traj_return(t, lambda s, a: reward.head_reward(model, s, a, 1))
              for t in trajs]
    np.testing.assert_allclose(got, expect, atol=1e-9)


def test_batch_gradient_matches_finite_differences(rng, trajs):
    # [DERIVED] central finite differences on batch_objective
    model = _small_model(rng, n_demos=4, K=2)
    head = 1
    demos = trajs[:3]
    background = _background(rng, trajs[3:])

    batch = irl.make_update_batch(model, head, demos, background)
    grads = nn.GradBuffer.zeros_like(model.params)
    irl.batch_gradient(model, head, batch, grads)

    eps = 1e-6
    tensors = model.params.trunk + model.params.heads
    g_tensors = grads.trunk + grads.heads
    rng_idx = np.random.default_rng(7)
    for (W, b), (gW, gb) in zip(tensors, g_tensors):
        for tensor, g in ((W, gW), (b, gb)):
            flat = tensor.reshape(-1)
            gflat = g.reshape(-1)
            for i in rng_idx.choice(flat.size, size=min(6, flat.size),
                                    replace=False):
                orig = flat[i]
                flat[i] = orig + eps
                up = irl.batch_objective(model, head, demos, background)
                flat[i] = orig - eps
                dn = irl.batch_objective(model, head, demos, background)
                flat[i] = orig
                fd = (up - dn) / (2 * eps)
                assert abs(gflat[i] - fd) < 1e-5 * max(1.0, abs(fd)), \
                    f"analytic {gflat[i]} vs fd {fd}"


def test_batch_gradient_untouched_heads_zero(rng, trajs):
    model = _small_model(rng, K=3)
    batch = irl.make_update_batch(model, 0, trajs[:2], _background(rng, trajs[2:]))
    grads = nn.GradBuffer.zeros_like(model.params)
    irl.batch_gradient(model, 0, batch, grads)
    for k in (1, 2):
        for t in grads.heads[k]:
            np.testing.assert_array_equal(t, 0.0)


def test_single_path_cancellation(rng, trajs):
    # One demo that is also the only background path: the data terms cancel
    # exactly and only the prior gradient remains.
    model = _small_model(rng, n_demos=1, K=1)
    t = trajs[0]
    batch = irl.make_update_batch(model, 0, [t], [(t, 0.0)])
    grads = nn.GradBuffer.zeros_like(model.params)
    irl.batch_gradient(model, 0, batch, grads)
    expect = nn.GradBuffer.zeros_like(model.params)
    reward.prior_grad(model, 0, expect)
    for g, e in zip(grads.trunk + grads.heads, expect.trunk + expect.heads):
        np.testing.assert_allclose(g[0], e[0], atol=1e-10)
        np.testing.assert_allclose(g[1], e[1], atol=1e-10)


def test_reward_update_rejects_empty(rng, trajs):
    model = _small_model(rng)
    opt = nn.AdamState.for_params(model.params)
    with pytest.raises(ValueError):
        irl.reward_update(model, 0, [], _background(rng, trajs), opt)
    with pytest.raises(ValueError):
        irl.reward_update(model, 0, trajs, [], opt)


def test_background_buffer_eviction(rng, trajs):
    buf = irl.BackgroundBuffer(capacity=3)
    recs = [policy.RolloutRecord(trajectory=t, step_log_q=np.zeros(len(t)))
            for t in trajs[:5]]
    buf.extend(recs)
    assert len(buf) == 3
    # oldest evicted first
    assert [r.trajectory.traj_id for r in buf.records] == \
        [t.traj_id for t in trajs[2:5]]
    picks = buf.sample(10, rng)
    assert all(any(p is r for r in buf.records) for p in picks)


def test_background_buffer_empty_sample(rng):
    with pytest.raises(ValueError):
        irl.BackgroundBuffer(capacity=3).sample(1, rng)


def _demo_set(rng, n=6):
    return TrajectorySet([make_traj(rng, n=4, traj_id=f"d{i}") for i in range(n)],
                         role=SetRole.DEMONSTRATION_SET)


def _tiny_config(**over):
    base = dict(num_heads=2, outer_iterations=3, inner_iterations=2,
                demo_batch_size=4, background_batch_size=8,
                rollouts_per_iteration=4, trunk_widths=(8, 4),
                buffer_capacity=100)
    base.update(over)
    return TrainConfig(**base)


def test_train_smoke_and_log_schema(rng):
    result = irl.train(_demo_set(rng), _tiny_config(), rng)
    assert len(result.log_rows) == 3
    cols = irl.TRAIN_LOG_HEADER.split(",")
    for row in result.log_rows:
        assert set(row) == set(cols)
        assert 0 <= row["head"] < 2
        assert np.isfinite(row["demo_return"])
        assert 1.0 <= row["ess"] <= 8 + 4  # background batch plus appended demos


def test_train_deterministic_under_seed():
    def run():
        rng = np.random.default_rng(11)
        demos = _demo_set(rng)
        return irl.train(demos, _tiny_config(), rng)

    a, b = run(), run()
    for (Wa, ba), (Wb, bb) in zip(a.model.params.trunk + a.model.params.heads,
                                  b.model.params.trunk + b.model.params.heads):
        np.testing.assert_array_equal(Wa, Wb)
        np.testing.assert_array_equal(ba, bb)
    for ra, rb in zip(a.log_rows, b.log_rows):
        assert {k: v for k, v in ra.items() if k != "wall_ms"} == \
            {k: v for k, v in rb.items() if k != "wall_ms"}


def test_train_zero_iterations_returns_initial_model():
    # N = 0: the result is exactly the freshly initialized model
    rng = np.random.default_rng(3)
    demos = _demo_set(rng)
    result = irl.train(demos, _tiny_config(outer_iterations=0), rng)
    assert result.log_rows == []
    rng2 = np.random.default_rng(3)
    demos2 = _demo_set(rng2)
    expect = reward.new_model(rng2, len(demos2.trajectories), 2, 0.1, (8, 4))
    for (Wa, ba), (Wb, bb) in zip(result.model.params.trunk + result.model.params.heads,
                                  expect.params.trunk + expect.params.heads):
        np.testing.assert_array_equal(Wa, Wb)
        np.testing.assert_array_equal(ba, bb)


def test_train_rejects_empty_demos(rng):
    with pytest.raises(ConfigError):
        irl.train(TrajectorySet([], role=SetRole.DEMONSTRATION_SET),
                  _tiny_config(), rng)


def test_train_lr_decay_applied(rng):
    # With decay 0.5 over 3 outer iterations the final Adam lr is lr * 0.25.
    cfg = _tiny_config(reward_lr_decay=0.5)
    demos = _demo_set(rng)
    result = irl.train(demos, cfg, rng)
    assert result is not None
    with pytest.raises(ConfigError):
        _tiny_config(reward_lr_decay=0.0).validate()
    with pytest.raises(ConfigError):
        _tiny_config(reward_lr_decay=1.5).validate()


def test_normalized_weights_hand_fixtures():
    # log w = [ln 2, 0] -> [2/3, 1/3]; ties at huge magnitude -> uniform.
    w, _ = irl.normalized_weights(np.array([np.log(2.0), 0.0]))
    np.testing.assert_allclose(w, [2 / 3, 1 / 3], rtol=1e-12)
    w, log_norm = irl.normalized_weights(np.array([1000.0, 1000.0]))
    np.testing.assert_allclose(w, [0.5, 0.5], rtol=1e-12)
    assert np.isfinite(log_norm)
