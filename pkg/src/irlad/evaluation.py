"""Metric computation against ground-truth labels, threshold sweeps, and
report emission. External detector score files are evaluated through the
same sweep instead of reimplementing baselines."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import scoring
from .core import Label, Trajectory, TrajectorySet
from .reward import BootstrapRewardModel
from .scoring import Flag, Mode, NormalizationStats


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(predicted: list[bool], labels: list[bool]) -> ConfusionCounts:
    if len(predicted) != len(labels):
        raise ValueError(f"length mismatch: {len(predicted)} predictions, {len(labels)} labels")
    tp = sum(p and l for p, l in zip(predicted, labels))
    fp = sum(p and not l for p, l in zip(predicted, labels))
    fn = sum((not p) and l for p, l in zip(predicted, labels))
    tn = sum((not p) and (not l) for p, l in zip(predicted, labels))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def metrics_from_counts(c: ConfusionCounts) -> dict:
    # Edge conventions: precision 0 with no predicted positives, recall 1
    # with no true anomalies present.
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else 0.0
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) > 0 else 1.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return {"precision": precision, "recall": recall, "f1": f1, "counts": c}


def metrics(flags: list, labels: list) -> dict:
    """Precision/recall/F1 with anomaly as the positive class. Flags may be
    scoring.Flag values (UncertainAnomaly counts as not flagged) or booleans;
    labels may be core.Label values or booleans."""
    pred = [f is Flag.ANOMALY if isinstance(f, Flag) else bool(f) for f in flags]
    true = [l is Label.ANOMALY if isinstance(l, Label) else bool(l) for l in labels]
    return metrics_from_counts(confusion(pred, true))


def threshold_sweep(scores: np.ndarray, labels: list, eps_grid: np.ndarray) -> dict:
    """Per-epsilon metrics (flag iff score <= eps) plus a ROC-style area
    computed by trapezoid over (fpr, tpr)."""
    eps_grid = np.asarray(eps_grid, dtype=float)
    if eps_grid.size == 0:
        raise ValueError("epsilon grid must be nonempty")
    scores = np.asarray(scores, dtype=float)
    true = np.array([l is Label.ANOMALY if isinstance(l, Label) else bool(l) for l in labels])
    rows = []
    for eps in eps_grid:
        pred = scores <= eps
        m = metrics_from_counts(confusion(list(pred), list(true)))
        m["epsilon"] = float(eps)
        rows.append(m)
    # Dense sweep over all observed score cutoffs for the area.
    cutoffs = np.concatenate([[-np.inf], np.sort(scores), [np.inf]])
    n_pos = max(int(true.sum()), 1)
    n_neg = max(int((~true).sum()), 1)
    tpr = np.array([np.sum((scores <= c) & true) / n_pos for c in cutoffs])
    fpr = np.array([np.sum((scores <= c) & ~true) / n_neg for c in cutoffs])
    area = float(np.trapezoid(tpr, fpr))
    return {"per_epsilon": rows, "area": area}


def evaluate_run(model: BootstrapRewardModel, stats: NormalizationStats,
                 test_set: TrajectorySet, mode: Mode,
                 epsilon: float = scoring.DEFAULT_EPSILON,
                 uncertainty_gate: float = scoring.DEFAULT_UNCERTAINTY_GATE,
                 eps_grid: np.ndarray | None = None) -> dict:
    """Trajectory-level metrics at the configured thresholds, per-trajectory
    scores, point-level flag traces, and a threshold sweep."""
    detections = []
    for traj in test_set:
        detections.append(scoring.detect(model, stats, traj, epsilon=epsilon,
                                         uncertainty_gate=uncertainty_gate, mode=mode))
    labels = [t.label for t in test_set]
    scores = np.array([d.normality for d in detections])
    flags = [d.flag for d in detections]
    if eps_grid is None:
        eps_grid = np.array([epsilon])
    sweep = threshold_sweep(scores, labels, eps_grid)
    return {
        "metrics": metrics(flags, labels),
        "detections": detections,
        "scores": scores,
        "traj_ids": [t.traj_id for t in test_set],
        "labels": labels,
        "sweep": sweep,
        "mode": mode,
        "epsilon": epsilon,
        "uncertainty_gate": uncertainty_gate,
    }


def load_score_file(path) -> tuple[list[str], np.ndarray]:
    """External detector scores: `traj_id,score` with one header line."""
    ids, vals = [], []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            if not line.strip():
                continue
            tid, val = line.rstrip("\n").split(",")
            ids.append(tid)
            vals.append(float(val))
    return ids, np.array(vals)


def summary_table(report: dict) -> str:
    m = report["metrics"]
    c = m["counts"]
    lines = [
        f"mode:      {report['mode'].value}",
        f"epsilon:   {report['epsilon']}",
        f"gate:      {report['uncertainty_gate']}",
        f"n:         {c.total}",
        f"tp/fp/fn/tn: {c.tp}/{c.fp}/{c.fn}/{c.tn}",
        f"precision: {m['precision']:.3f}",
        f"recall:    {m['recall']:.3f}",
        f"f1:        {m['f1']:.3f}",
        f"sweep area: {report['sweep']['area']:.3f}",
    ]
    return "\n".join(lines)
