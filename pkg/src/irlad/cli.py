"""Command-line entry point: ingest / train / score / eval / bench-oracle
subcommands driven by a flat key=value config file with flag overrides.

Every run writes under `out_dir/<timestamp>-<confighash>/` unless an explicit
run directory is given. All artifacts embed (format version, seed, config
hash), so identical config+seed reruns are byte-identical apart from the run
directory name.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 acceptance
failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import bench, data, evaluation, irl, modelio, scoring
from .core import (ConfigError, Label, Source, TrainConfig, TrajectoryError,
                   TrajectorySet, SetRole, read_trajectories, write_trajectories)
from .scoring import Mode

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ACCEPTANCE = 3

# Config keys with defaults. Flat on purpose: one line per knob, overridable
# on the command line as key=value.
CONFIG_DEFAULTS = {
    "seed": 0,
    "out_dir": "runs",
    "run_dir": "",  # explicit run directory; overrides out_dir naming
    # ingest
    "geolife_dir": "",
    "tst_file": "",
    "dt": 5.0,
    "min_length": 100,
    "normalize_coords": True,
    # train
    "demos": "",  # canonical CSV file or directory of them
    "per_user": False,
    "num_heads": 10,
    "prior_variance": 0.1,
    "outer_iterations": 200,
    "inner_iterations": 10,
    "demo_batch_size": 32,
    "background_batch_size": 128,
    "rollouts_per_iteration": 10,
    "discount": 0.99,
    "reward_learning_rate": 1e-3,
    "reward_lr_decay": 1.0,
    "policy_learning_rate": 1e-3,
    "kl_coeff": 1.0,
    "policy_update_steps": 5,
    "buffer_capacity": 50000,
    # score / eval
    "model": "",
    "input": "",  # canonical CSV, or "-" for streaming stdin scoring
    "epsilon": scoring.DEFAULT_EPSILON,
    "uncertainty_gate": scoring.DEFAULT_UNCERTAINTY_GATE,
    "mode": "adu",
    "score_files": "",  # comma-separated external traj_id,score files
}

_TRAIN_KEYS = ("num_heads", "prior_variance", "outer_iterations",
               "inner_iterations", "demo_batch_size", "background_batch_size",
               "rollouts_per_iteration", "discount", "reward_learning_rate",
               "reward_lr_decay", "policy_learning_rate", "kl_coeff",
               "policy_update_steps",
               "buffer_capacity", "seed")


def _coerce(key: str, raw: str):
    default = CONFIG_DEFAULTS[key]
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    if path:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, val = (p.strip() for p in line.split("=", 1))
                if key not in CONFIG_DEFAULTS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                cfg[key] = _coerce(key, val)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, val = (p.strip() for p in item.split("=", 1))
        if key not in CONFIG_DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, val)
    return cfg


def config_hash(cfg: dict) -> str:
    # Output locations are excluded: the same semantic config must hash (and
    # hence produce artifacts) identically wherever the run lands.
    canonical = json.dumps({k: cfg[k] for k in sorted(cfg)
                            if k not in ("out_dir", "run_dir")}, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(**{k: cfg[k] for k in _TRAIN_KEYS}).validate()


def run_directory(cfg: dict) -> str:
    if cfg["run_dir"]:
        path = cfg["run_dir"]
    else:
        stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
        path = os.path.join(cfg["out_dir"], f"{stamp}-{config_hash(cfg)}")
    os.makedirs(path, exist_ok=True)
    return path


def _write_config_snapshot(run_dir: str, cfg: dict) -> None:
    with open(os.path.join(run_dir, "config.txt"), "w", encoding="utf-8") as fh:
        for key in sorted(cfg):
            fh.write(f"{key}={cfg[key]}\n")
        fh.write(f"# config_hash={config_hash(cfg)}\n")


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

def _geolife_tracks(root: str) -> dict[str, list[data.RawTrack]]:
    """GeoLife layout: <root>/<user>/Trajectory/*.plt."""
    by_agent: dict[str, list[data.RawTrack]] = {}
    for user in sorted(os.listdir(root)):
        traj_dir = os.path.join(root, user, "Trajectory")
        if not os.path.isdir(traj_dir):
            continue
        for name in sorted(os.listdir(traj_dir)):
            if not name.endswith(".plt"):
                continue
            path = os.path.join(traj_dir, name)
            try:
                track = data.parse_plt(path, agent_id=user)
            except data.TooShort:
                continue
            by_agent.setdefault(user, []).append(track)
    return by_agent


def _tst_tracks(path: str) -> dict[str, list[data.RawTrack]]:
    by_agent: dict[str, list[data.RawTrack]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for i, row in enumerate(csv.DictReader(fh)):
            try:
                track = data.parse_tst(row, track_id=f"trip_{i}")
            except data.TooShort:
                continue
            by_agent.setdefault(track.agent_id, []).append(track)
    return by_agent


def cmd_ingest(cfg: dict) -> int:
    if not cfg["geolife_dir"] and not cfg["tst_file"]:
        print("ingest: set geolife_dir and/or tst_file", file=sys.stderr)
        return EXIT_USAGE
    run_dir = run_directory(cfg)
    _write_config_snapshot(run_dir, cfg)
    out_dir = os.path.join(run_dir, "canonical")
    os.makedirs(out_dir, exist_ok=True)

    by_agent: dict[str, list[data.RawTrack]] = {}
    if cfg["geolife_dir"]:
        by_agent.update(_geolife_tracks(cfg["geolife_dir"]))
    if cfg["tst_file"]:
        for agent, tracks in _tst_tracks(cfg["tst_file"]).items():
            by_agent.setdefault(agent, []).extend(tracks)

    manifest = {"config_hash": config_hash(cfg), "seed": cfg["seed"],
                "agents": {}, "total_trajectories": 0, "total_rejected": 0}
    for agent in sorted(by_agent):
        tracks = by_agent[agent]
        norm = data.fit_normalization(tracks) if cfg["normalize_coords"] else None
        pcfg = data.PreprocessConfig(dt=cfg["dt"], min_length=cfg["min_length"],
                                     normalization=norm)
        kept, rejected = [], 0
        for track in tracks:
            traj = data.preprocess(track, pcfg)
            if traj is None:
                rejected += 1
            else:
                kept.append(traj)
        manifest["agents"][agent] = {"kept": len(kept), "rejected": rejected}
        manifest["total_trajectories"] += len(kept)
        manifest["total_rejected"] += rejected
        if kept:
            write_trajectories(os.path.join(out_dir, f"{agent}.csv"), kept)
    with open(os.path.join(run_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"ingested {manifest['total_trajectories']} trajectories "
          f"({manifest['total_rejected']} rejected) -> {out_dir}")
    return EXIT_OK if manifest["total_trajectories"] > 0 else EXIT_DATA


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _demo_files(spec_path: str) -> list[str]:
    if os.path.isdir(spec_path):
        return [os.path.join(spec_path, n) for n in sorted(os.listdir(spec_path))
                if n.endswith(".csv")]
    return [spec_path]


def _train_one(trajs, cfg: dict, run_dir: str, tag: str) -> None:
    demos = TrajectorySet(list(trajs), role=SetRole.DEMONSTRATION_SET)
    tcfg = train_config(cfg)
    rng = np.random.default_rng(cfg["seed"])
    result = irl.train(demos, tcfg, rng)
    stats = scoring.fit_stats(result.model, demos)
    suffix = f"_{tag}" if tag else ""
    modelio.save_bundle(os.path.join(run_dir, f"model{suffix}.bin"),
                        result.model, result.policy, stats,
                        seed=cfg["seed"], config_hash=config_hash(cfg),
                        agent_id=tag)
    irl.write_training_log(os.path.join(run_dir, f"train_log{suffix}.csv"),
                           result.log_rows)


def cmd_train(cfg: dict) -> int:
    if not cfg["demos"]:
        print("train: set demos to a canonical CSV file or directory", file=sys.stderr)
        return EXIT_USAGE
    trajs = []
    for path in _demo_files(cfg["demos"]):
        trajs.extend(read_trajectories(path, source=Source.DEMONSTRATION))
    if not trajs:
        print("train: no demonstration trajectories found", file=sys.stderr)
        return EXIT_DATA
    run_dir = run_directory(cfg)
    _write_config_snapshot(run_dir, cfg)
    if cfg["per_user"]:
        # "for each of whom we learn a separate reward function": one model
        # per agent id.
        by_agent: dict[str, list] = {}
        for t in trajs:
            by_agent.setdefault(t.agent_id, []).append(t)
        for agent in sorted(by_agent):
            _train_one(by_agent[agent], cfg, run_dir, tag=agent)
        print(f"trained {len(by_agent)} per-user models -> {run_dir}")
    else:
        _train_one(trajs, cfg, run_dir, tag="")
        print(f"trained pooled model -> {run_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------

def _load_model(cfg: dict):
    if not cfg["model"]:
        raise ConfigError("set model to a saved bundle path")
    model, policy, stats, coord_norm, meta = modelio.load_bundle(cfg["model"])
    if stats is None:
        raise ConfigError(f"{cfg['model']}: bundle has no normalization stats")
    return model, stats


def _stream_score(cfg: dict, model, stats, mode: Mode, out) -> None:
    """Streaming mode: canonical rows on stdin, score rows out as observations
    arrive. State is reconstructed per trajectory from its first row."""
    from .core import parse_canonical_row

    out.write(scoring.SCORE_CSV_HEADER + "\n")
    current = None  # (traj_id, lon0, lat0, step)
    for line in sys.stdin:
        if not line.strip() or line.startswith("agent_id,"):
            continue
        _, traj_id, t, lon, lat, vlon, vlat, _ = parse_canonical_row(line)
        if current is None or current[0] != traj_id:
            current = [traj_id, lon, lat, 0]
        s = np.array([lon, lat, current[1], current[2], t])
        a = np.array([vlon, vlat])
        det = scoring.detect_point(model, stats, s, a, epsilon=cfg["epsilon"],
                                   uncertainty_gate=cfg["uncertainty_gate"], mode=mode)
        r_mean = float(det.normality * stats.std + stats.mean)
        out.write(f"{traj_id},{current[3]},{t:.6f},{lon:.9f},{lat:.9f},"
                  f"{r_mean:.9f},{det.uncertainty:.9f},{det.normality:.9f},"
                  f"{det.flag.value}\n")
        out.flush()
        current[3] += 1


def cmd_score(cfg: dict) -> int:
    if not cfg["input"]:
        print("score: set input to a canonical CSV path or '-'", file=sys.stderr)
        return EXIT_USAGE
    model, stats = _load_model(cfg)
    mode = Mode(cfg["mode"])
    if cfg["input"] == "-":
        _stream_score(cfg, model, stats, mode, sys.stdout)
        return EXIT_OK
    trajs = read_trajectories(cfg["input"], source=Source.DEMONSTRATION)
    run_dir = run_directory(cfg)
    _write_config_snapshot(run_dir, cfg)
    out_path = os.path.join(run_dir, "scores.csv")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(scoring.SCORE_CSV_HEADER + "\n")
        for traj in trajs:
            for row in scoring.score_rows(model, stats, traj, epsilon=cfg["epsilon"],
                                          uncertainty_gate=cfg["uncertainty_gate"],
                                          mode=mode):
                fh.write(row + "\n")
    print(f"scored {len(trajs)} trajectories -> {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(cfg: dict) -> int:
    if not cfg["input"]:
        print("eval: set input to a labeled canonical CSV", file=sys.stderr)
        return EXIT_USAGE
    model, stats = _load_model(cfg)
    mode = Mode(cfg["mode"])
    trajs = read_trajectories(cfg["input"], source=Source.DEMONSTRATION)
    test_set = TrajectorySet(trajs, role=SetRole.TEST_SET)
    eps_grid = np.linspace(-4.0, 1.0, 51)
    report = evaluation.evaluate_run(model, stats, test_set, mode,
                                     epsilon=cfg["epsilon"],
                                     uncertainty_gate=cfg["uncertainty_gate"],
                                     eps_grid=eps_grid)
    run_dir = run_directory(cfg)
    _write_config_snapshot(run_dir, cfg)
    with open(os.path.join(run_dir, "report.csv"), "w", encoding="utf-8") as fh:
        fh.write("epsilon,precision,recall,f1\n")
        for row in report["sweep"]["per_epsilon"]:
            fh.write(f"{row['epsilon']:.4f},{row['precision']:.6f},"
                     f"{row['recall']:.6f},{row['f1']:.6f}\n")
    with open(os.path.join(run_dir, "traj_scores.csv"), "w", encoding="utf-8") as fh:
        fh.write("traj_id,score\n")
        for tid, score in zip(report["traj_ids"], report["scores"]):
            fh.write(f"{tid},{score:.9f}\n")
    summary = evaluation.summary_table(report)
    labels = report["labels"]
    # External detector score files ride through the same sweep.
    for path in filter(None, (p.strip() for p in cfg["score_files"].split(","))):
        ids, vals = evaluation.load_score_file(path)
        by_id = dict(zip(ids, vals))
        try:
            ext_scores = np.array([by_id[t] for t in report["traj_ids"]])
        except KeyError as exc:
            print(f"eval: {path} missing trajectory {exc}", file=sys.stderr)
            return EXIT_DATA
        sweep = evaluation.threshold_sweep(ext_scores, labels, eps_grid)
        summary += f"\nexternal {path}: sweep area {sweep['area']:.3f}"
    with open(os.path.join(run_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(summary + "\n")
    print(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench-oracle
# ---------------------------------------------------------------------------

def cmd_bench_oracle(cfg: dict) -> int:
    checks = bench.run_all(seed=cfg["seed"])
    all_passed = True
    for check in checks:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"{status} {check['name']}: {check['detail']}")
        all_passed &= check["passed"]
    return EXIT_OK if all_passed else EXIT_ACCEPTANCE


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "score": cmd_score,
    "eval": cmd_eval,
    "bench-oracle": cmd_bench_oracle,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="irlad",
        description="IRL-based sequential anomaly detection for trajectories")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("overrides", nargs="*", metavar="key=value",
                        help="config overrides")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = load_config(args.config, args.overrides)
        return COMMANDS[args.command](cfg)
    except (TrajectoryError, data.ParseError, FileNotFoundError) as exc:
        # Checked before ValueError: these subclass it but are data errors.
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
