"""Acceptance gate: ten end-to-end criteria with pinned tolerances. Each test
prints one PASS/FAIL line. Criteria 5 and 6 run full training and dominate the
suite's runtime; their budgets (10 minutes each) are part of the criteria.
"""
import subprocess
import sys
import time

import numpy as np
import pytest

from irlad import bench, cli, evaluation, irl, nn, reward, scoring
from irlad.core import SetRole, TrainConfig, TrajectorySet, write_trajectories
from irlad.evaluation import ConfusionCounts
from irlad.scoring import Flag, Mode

from conftest import make_traj


def _report(num: int, name: str, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"\n[criterion {num:2d}] {status} {name}: {detail}")
    assert passed, f"criterion {num} ({name}): {detail}"


def test_criterion_01_gradient_correctness():
    # nn.backward vs central finite differences, 100 random triples, < 30 s
    t0 = time.time()
    rng = np.random.default_rng(0)
    eps, tol = 1e-6, 1e-4
    worst = 0.0
    for trial in range(100):
        widths = tuple(rng.integers(2, 6, size=rng.integers(1, 3)))
        K = int(rng.integers(1, 4))
        params = nn.init_params(rng, 0.5, widths, K, input_dim=7, head_dim=1)
        head = int(rng.integers(0, K))
        X = rng.normal(size=(int(rng.integers(1, 4)), 7))
        out_grad = rng.normal(size=(len(X), 1))
        grads = nn.GradBuffer.zeros_like(params)
        nn.backward_batch(params, X, head, out_grad, grads)

        def objective():
            return float(np.sum(nn.forward_batch(params, X, head) * out_grad))

        tensors = params.trunk + params.heads
        g_tensors = grads.trunk + grads.heads
        for (W, b), (gW, gb) in zip(tensors, g_tensors):
            for tensor, g in ((W, gW), (b, gb)):
                flat, gflat = tensor.reshape(-1), g.reshape(-1)
                idx = rng.choice(flat.size, size=min(3, flat.size), replace=False)
                for i in idx:
                    orig = flat[i]
                    flat[i] = orig + eps
                    up = objective()
                    flat[i] = orig - eps
                    dn = objective()
                    flat[i] = orig
                    fd = (up - dn) / (2 * eps)
                    rel = abs(gflat[i] - fd) / max(1.0, abs(fd))
                    worst = max(worst, rel)
    elapsed = time.time() - t0
    _report(1, "gradient correctness", worst < 1e-4 and elapsed < 30,
            f"max relative error {worst:.2e} (tol 1e-4), {elapsed:.1f}s (< 30s)")


def test_criterion_02_batch_objective_gradient():
    # reward_update's gradient vs finite differences of the explicit MAP
    # batch objective on a 3-trajectory toy batch
    rng = np.random.default_rng(1)
    model = reward.new_model(rng, num_demos=3, K=2, prior_variance=0.1,
                             widths=(6, 4))
    head = 0
    trajs = [make_traj(rng, n=4, traj_id=f"t{i}") for i in range(3)]
    demos = trajs[:1]
    background = [(t, float(rng.normal())) for t in trajs[1:]]

    batch = irl.make_update_batch(model, head, demos, background)
    grads = nn.GradBuffer.zeros_like(model.params)
    irl.batch_gradient(model, head, batch, grads)

    eps, worst = 1e-6, 0.0
    for (W, b), (gW, gb) in zip(model.params.trunk + model.params.heads,
                                grads.trunk + grads.heads):
        for tensor, g in ((W, gW), (b, gb)):
            flat, gflat = tensor.reshape(-1), g.reshape(-1)
            for i in rng.choice(flat.size, size=min(5, flat.size), replace=False):
                orig = flat[i]
                flat[i] = orig + eps
                up = irl.batch_objective(model, head, demos, background)
                flat[i] = orig - eps
                dn = irl.batch_objective(model, head, demos, background)
                flat[i] = orig
                fd = (up - dn) / (2 * eps)
                worst = max(worst, abs(gflat[i] - fd) / max(1.0, abs(fd)))
    _report(2, "batch-objective gradient", worst < 1e-4,
            f"max relative error {worst:.2e} (tol 1e-4)")


def test_criterion_03_oracle_gradient_agreement():
    t0 = time.time()
    r = bench.run_gradient_agreement(seed=0, n_rollouts=10_000)
    elapsed = time.time() - t0
    _report(3, "oracle gradient agreement", r["passed"] and elapsed < 120,
            f"max |z| {r['max_z']:.2f} (limit 3), {elapsed:.1f}s (< 120s)")


def test_criterion_03_negative_control():
    # a deliberately biased estimate must be rejected by the same z-test
    r = bench.run_gradient_agreement(seed=0, n_rollouts=10_000, corrupt=0.5)
    assert not r["passed"], "corrupted gradient estimate must fail the z-test"


def test_criterion_04_soft_vi_equivalence():
    r = bench.run_soft_vi_equivalence(tol=1e-10)
    _report(4, "soft-policy/enumeration equivalence", r["passed"],
            f"max marginal error {r['max_err']:.2e} (tol 1e-10)")


def test_criterion_05_reward_recovery():
    t0 = time.time()
    r = bench.run_recovery(seed=0, n_demos=500, outer_iterations=200)
    elapsed = time.time() - t0
    _report(5, "gridworld reward recovery",
            r["passed"] and elapsed < 600,
            f"spearman {r['spearman']:+.3f} (floor 0.7), {elapsed:.0f}s (< 600s)")


def test_criterion_06_synthetic_detection():
    t0 = time.time()
    r = bench.run_detection(seed=0, outer_iterations=200)
    elapsed = time.time() - t0
    _report(6, "synthetic two-agent detection",
            r["passed"] and elapsed < 600,
            f"sweep area {r['area']:.3f} (floor 0.9), {elapsed:.0f}s (< 600s)")


def test_criterion_07_ad_superset_adu():
    rng = np.random.default_rng(2)
    model = reward.new_model(rng, num_demos=5, K=4, prior_variance=0.1,
                             widths=(8, 4))
    fit = [make_traj(rng, n=6, traj_id=f"f{i}") for i in range(5)]
    stats = scoring.fit_stats(model, fit)
    # epsilon 0 / a mid-range gate so that all three flags actually occur
    probe = [make_traj(rng, n=6, traj_id=f"p{i}") for i in range(50)]
    gate = float(np.median([scoring.detect(model, stats, t).uncertainty
                            for t in probe]))
    n_checked = n_adu_anom = 0
    ok = True
    for i in range(200):
        t = make_traj(rng, n=6, traj_id=f"x{i}")
        ad = scoring.detect(model, stats, t, epsilon=0.0,
                            uncertainty_gate=gate, mode=Mode.AD)
        adu = scoring.detect(model, stats, t, epsilon=0.0,
                             uncertainty_gate=gate, mode=Mode.ADU)
        n_checked += 1
        if adu.flag is Flag.ANOMALY:
            n_adu_anom += 1
            ok &= ad.flag is Flag.ANOMALY
        if ad.flag is Flag.NORMAL:
            ok &= adu.flag is Flag.NORMAL
    _report(7, "AD flag set contains ADU flag set", ok and n_adu_anom > 0,
            f"{n_checked} trajectories, {n_adu_anom} ADU anomalies, no violation")


def test_criterion_08_reported_f1_consistency():
    # recall 0.840, precision 0.353 -> f1 2PR/(P+R) = 0.497 vs reported 0.495
    tp = 840
    fp = round(tp / 0.353) - tp
    fn = round(tp / 0.840) - tp
    m = evaluation.metrics_from_counts(ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=0))
    err = abs(m["f1"] - 0.495)
    _report(8, "reported-metric consistency", err <= 0.005,
            f"f1 {m['f1']:.3f} vs 0.495 reported (tol 0.005)")


def test_criterion_09_scoring_invariants():
    rng = np.random.default_rng(3)
    model = reward.new_model(rng, num_demos=6, K=5, prior_variance=0.1,
                             widths=(8, 4))
    fit = [make_traj(rng, n=7, traj_id=f"f{i}") for i in range(6)]
    stats = scoring.fit_stats(model, fit)
    norms = np.concatenate([scoring.point_scores(model, stats, t)[2] for t in fit])
    mean_ok = abs(norms.mean()) <= 1e-10
    std_ok = abs(norms.std() - 1.0) <= 1e-10

    weight_err = 0.0
    for _ in range(50):
        log_w = rng.normal(scale=rng.uniform(0.1, 40.0), size=32)
        w, _ = irl.normalized_weights(log_w)
        weight_err = max(weight_err, abs(w.sum() - 1.0))

    var_ok = True
    for _ in range(200):
        var_ok &= float(reward.reward_variance(
            model, rng.normal(size=5), rng.normal(size=2))) >= 0.0
    _report(9, "scoring invariants", mean_ok and std_ok and
            weight_err <= 1e-12 and var_ok,
            f"|mean| {abs(norms.mean()):.1e}, |std-1| {abs(norms.std()-1):.1e}, "
            f"max weight-sum error {weight_err:.1e}, variance >= 0")


def test_criterion_10_determinism(tmp_path):
    rng = np.random.default_rng(4)
    demos_csv = tmp_path / "demos.csv"
    trajs = [make_traj(rng, n=5, traj_id=f"d{i}") for i in range(6)]
    write_trajectories(demos_csv, trajs)
    test_csv = tmp_path / "test.csv"
    write_trajectories(test_csv, [make_traj(rng, n=5, traj_id=f"x{i}")
                                  for i in range(4)])
    small = ["num_heads=2", "outer_iterations=3", "inner_iterations=2",
             "demo_batch_size=4", "background_batch_size=8",
             "rollouts_per_iteration=4", "seed=9"]

    artifacts = []
    for run in ("r1", "r2"):
        run_dir = tmp_path / run
        assert cli.main(["train", f"demos={demos_csv}", f"run_dir={run_dir}",
                         *small]) == cli.EXIT_OK
        score_dir = tmp_path / f"{run}_scores"
        assert cli.main(["score", f"model={run_dir / 'model.bin'}",
                         f"input={test_csv}", f"run_dir={score_dir}"]) == cli.EXIT_OK
        artifacts.append(((run_dir / "model.bin").read_bytes(),
                          (score_dir / "scores.csv").read_bytes()))
    model_ok = artifacts[0][0] == artifacts[1][0]
    scores_ok = artifacts[0][1] == artifacts[1][1]
    _report(10, "bit-identical determinism", model_ok and scores_ok,
            f"model bytes equal: {model_ok}, score CSV bytes equal: {scores_ok}")
