"""Dataset ingestion (GeoLife PLT files, taxi-trip CSV with polylines),
preprocessing into state-action trajectories, anomaly injection, and
long-trip labeling."""
from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Label, Source, Trajectory, TrajectorySet, SetRole


class ParseError(ValueError):
    pass


class TooShort(ValueError):
    pass


@dataclass
class RawTrack:
    agent_id: str
    track_id: str
    times: np.ndarray  # absolute seconds, strictly increasing
    lons: np.ndarray
    lats: np.ndarray
    source: str = "canonical"  # {"geolife", "tst", "canonical"}
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) < 2:
            raise TooShort(f"track {self.track_id}: fewer than 2 points")
        if np.any(np.diff(self.times) <= 0):
            raise ParseError(f"track {self.track_id}: timestamps not strictly increasing")

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class CoordNormalization:
    lon_mean: float
    lat_mean: float
    lon_std: float
    lat_std: float

    def apply(self, lons: np.ndarray, lats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (lons - self.lon_mean) / self.lon_std, (lats - self.lat_mean) / self.lat_std


def fit_normalization(tracks: list[RawTrack]) -> CoordNormalization:
    """Per-agent z-score parameters over all raw points."""
    lons = np.concatenate([t.lons for t in tracks])
    lats = np.concatenate([t.lats for t in tracks])
    return CoordNormalization(
        lon_mean=float(lons.mean()), lat_mean=float(lats.mean()),
        lon_std=max(float(lons.std()), 1e-9), lat_std=max(float(lats.std()), 1e-9),
    )


@dataclass
class PreprocessConfig:
    dt: float = 5.0  # resample interval, seconds
    min_length: int = 100  # minimum post-resample step count
    normalization: CoordNormalization | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.min_length < 2:
            raise ValueError("min_length must be >= 2")


# GeoLife PLT: 6 header lines, then `lat,lon,0,alt,days,date,time` per line.
PLT_HEADER_LINES = 6
_EPOCH = _dt.datetime(1970, 1, 1)


def parse_plt(path, agent_id: str | None = None, track_id: str | None = None) -> RawTrack:
    times, lons, lats = [], [], []
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    for lineno, line in enumerate(lines[PLT_HEADER_LINES:], start=PLT_HEADER_LINES + 1):
        if not line.strip():
            continue
        parts = line.strip().split(",")
        if len(parts) != 7:
            raise ParseError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
        try:
            lat = float(parts[0])
            lon = float(parts[1])
            stamp = _dt.datetime.strptime(parts[5] + " " + parts[6], "%Y-%m-%d %H:%M:%S")
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        t = (stamp - _EPOCH).total_seconds()
        if times and t <= times[-1]:
            continue  # duplicate or out-of-order fix: drop the point
        times.append(t)
        lons.append(lon)
        lats.append(lat)
    if len(times) < 2:
        raise TooShort(f"{path}: fewer than 2 valid points")
    name = str(path).rsplit("/", 1)[-1].removesuffix(".plt")
    return RawTrack(agent_id=agent_id or "unknown", track_id=track_id or name,
                    times=np.array(times), lons=np.array(lons), lats=np.array(lats),
                    source="geolife")


TST_SAMPLE_PERIOD = 15.0  # seconds between polyline points


def parse_tst(row: dict, track_id: str | None = None) -> RawTrack:
    """One taxi-trip CSV row; the POLYLINE column holds a JSON array of
    [lon, lat] pairs sampled every 15 s. Meta columns are kept as-is."""
    poly_raw = row.get("POLYLINE", "")
    try:
        poly = json.loads(poly_raw) if poly_raw else []
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed polyline: {exc}") from exc
    if len(poly) < 2:
        raise TooShort("polyline has fewer than 2 points")
    arr = np.asarray(poly, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ParseError(f"polyline must be a list of [lon, lat] pairs, got shape {arr.shape}")
    meta = {k: v for k, v in row.items() if k != "POLYLINE"}
    return RawTrack(
        agent_id=str(row.get("TAXI_ID", "pool")),
        track_id=track_id or str(row.get("TRIP_ID", "trip")),
        times=np.arange(len(arr)) * TST_SAMPLE_PERIOD,
        lons=arr[:, 0], lats=arr[:, 1], source="tst", meta=meta,
    )


def preprocess(raw: RawTrack, cfg: PreprocessConfig) -> Trajectory | None:
    """Resample to uniform dt by linear interpolation and build the 5-dim
    state / 2-dim velocity-action sequence. Returns None when the resampled
    track is shorter than cfg.min_length (a rejection, not a failure)."""
    rel = raw.times - raw.times[0]
    duration = rel[-1]
    n = int(np.floor(duration / cfg.dt + 1e-9)) + 1
    if n < cfg.min_length:
        return None
    grid = np.arange(n) * cfg.dt
    lons = np.interp(grid, rel, raw.lons)
    lats = np.interp(grid, rel, raw.lats)
    if cfg.normalization is not None:
        lons, lats = cfg.normalization.apply(lons, lats)
    actions = np.zeros((n, 2))
    actions[:-1, 0] = np.diff(lons) / cfg.dt
    actions[:-1, 1] = np.diff(lats) / cfg.dt
    states = np.column_stack([
        lons, lats,
        np.full(n, lons[0]), np.full(n, lats[0]),
        grid,
    ])
    return Trajectory(agent_id=raw.agent_id, states=states, actions=actions,
                      times=grid, label=Label.UNLABELED,
                      source=Source.DEMONSTRATION, traj_id=raw.track_id)


def inject_anomalies(target: TrajectorySet, donors: TrajectorySet,
                     rate: float, rng: np.random.Generator) -> TrajectorySet:
    """Mix donor trajectories into the target set until the anomaly fraction
    equals `rate` (rounded to the nearest count). Targets become Normal,
    injected donors become Anomaly."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("rate must be in [0, 1)")
    target_agents = {t.agent_id for t in target}
    donor_pool = [t for t in donors if t.agent_id not in target_agents]
    if len(donor_pool) < len(list(donors)):
        raise ValueError("donors must be disjoint by agent_id from the target set")
    n_target = len(target.trajectories)
    n_inject = int(round(rate * n_target / (1.0 - rate)))
    if n_inject > len(donor_pool):
        raise ValueError(f"need {n_inject} donors, only {len(donor_pool)} available")
    picks = rng.choice(len(donor_pool), size=n_inject, replace=False) if n_inject else []
    mixed = [t.with_label(Label.NORMAL) for t in target]
    mixed += [donor_pool[i].with_label(Label.ANOMALY) for i in picks]
    order = rng.permutation(len(mixed))
    return TrajectorySet([mixed[i] for i in order], role=SetRole.TEST_SET)


def label_long_trips(trips: TrajectorySet, cutoff: float = 3000.0,
                     crop_to: int | None = None) -> TrajectorySet:
    """Label trips longer than `cutoff` seconds as anomalies and crop them to
    `crop_to` steps (default: median normal-trip length) so detectors cannot
    key on trip length."""
    durations = [float(t.times[-1]) for t in trips]
    normal_lengths = [len(t) for t, d in zip(trips, durations) if d <= cutoff]
    if crop_to is None:
        if not normal_lengths:
            raise ValueError("no normal trips to derive a crop length from")
        crop_to = int(np.median(normal_lengths))
    out = []
    for traj, dur in zip(trips, durations):
        if dur > cutoff:
            k = min(crop_to, len(traj))
            out.append(replace(traj, states=traj.states[:k], actions=traj.actions[:k],
                               times=traj.times[:k], label=Label.ANOMALY))
        else:
            out.append(traj.with_label(Label.NORMAL))
    return TrajectorySet(out, role=SetRole.TEST_SET)
