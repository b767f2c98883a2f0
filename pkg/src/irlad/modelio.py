"""Bundle serialization: reward ensemble, sampling policy, normalization
statistics, and coordinate scaling in one self-describing artifact file."""
from __future__ import annotations

import numpy as np

from . import nn
from .data import CoordNormalization
from .policy import GaussianPolicy
from .reward import BootstrapRewardModel
from .scoring import NormalizationStats


def save_bundle(path, model: BootstrapRewardModel, policy: GaussianPolicy,
                stats: NormalizationStats | None, seed: int, config_hash: str,
                coord_norm: CoordNormalization | None = None,
                agent_id: str = "") -> None:
    meta = {
        "role": "irlad-model-bundle",
        "seed": seed,
        "config_hash": config_hash,
        "agent_id": agent_id,
        "prior_variance": model.prior_variance,
        "reward_n_trunk": len(model.params.trunk),
        "reward_K": model.K,
        "policy_n_trunk": len(policy.params.trunk),
        "policy_mean_scale": None if not np.isfinite(policy.mean_scale)
                             else float(policy.mean_scale),
        "has_stats": stats is not None,
        "has_coord_norm": coord_norm is not None,
    }
    arrays = nn.params_to_arrays(model.params, prefix="reward_")
    arrays.update(nn.params_to_arrays(policy.params, prefix="policy_"))
    arrays["policy_log_std"] = policy.log_std
    arrays["bootstrap_assignments"] = np.stack(model.bootstrap_assignments).astype(np.int64)
    if stats is not None:
        arrays["stats"] = np.array([stats.mean, stats.std, float(stats.count)])
    if coord_norm is not None:
        arrays["coord_norm"] = np.array([coord_norm.lon_mean, coord_norm.lat_mean,
                                         coord_norm.lon_std, coord_norm.lat_std])
    nn.save_artifact(path, meta, arrays)


def load_bundle(path) -> tuple[BootstrapRewardModel, GaussianPolicy,
                               NormalizationStats | None,
                               CoordNormalization | None, dict]:
    meta, arrays = nn.load_artifact(path)
    if meta.get("role") != "irlad-model-bundle":
        raise ValueError(f"{path}: not a model bundle")
    rparams = nn.params_from_arrays(arrays, meta["reward_n_trunk"], meta["reward_K"],
                                    prefix="reward_")
    assignments = [row.copy() for row in arrays["bootstrap_assignments"]]
    model = BootstrapRewardModel(params=rparams, prior_variance=meta["prior_variance"],
                                 bootstrap_assignments=assignments)
    pparams = nn.params_from_arrays(arrays, meta["policy_n_trunk"], K=1, prefix="policy_")
    scale = meta.get("policy_mean_scale")
    policy = GaussianPolicy(params=pparams, log_std=arrays["policy_log_std"],
                            mean_scale=np.inf if scale is None else float(scale))
    stats = None
    if meta.get("has_stats"):
        m, s, c = arrays["stats"]
        stats = NormalizationStats(mean=float(m), std=float(s), count=int(c))
    coord_norm = None
    if meta.get("has_coord_norm"):
        lm, am, ls, as_ = arrays["coord_norm"]
        coord_norm = CoordNormalization(lon_mean=float(lm), lat_mean=float(am),
                                        lon_std=float(ls), lat_std=float(as_))
    return model, policy, stats, coord_norm, meta
