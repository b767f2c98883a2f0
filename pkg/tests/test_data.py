"""Ingestion (PLT, trip-CSV polylines), preprocessing, anomaly injection,
and long-trip labeling."""
import numpy as np
import pytest

from irlad import data
from irlad.core import Label, SetRole, TrajectorySet

from conftest import make_traj

PLT_BODY = """Geolife trajectory
WGS 84
Altitude is in Feet
Reserved 3
0,2,255,My Track,0,0,2,8421376
0
39.984702,116.318417,0,492,39744.1201851852,2008-10-23,02:53:04
39.984683,116.318450,0,492,39744.1202546296,2008-10-23,02:53:10
39.984686,116.318417,0,492,39744.1203125000,2008-10-23,02:53:15
39.984688,116.318385,0,492,39744.1203703704,2008-10-23,02:53:20
"""


@pytest.fixture
def plt_file(tmp_path):
    p = tmp_path / "20081023025304.plt"
    p.write_text(PLT_BODY, encoding="utf-8")
    return p


def test_parse_plt(plt_file):
    track = data.parse_plt(plt_file, agent_id="000")
    assert track.agent_id == "000"
    assert track.track_id == "20081023025304"
    assert track.source == "geolife"
    assert len(track) == 4
    # first record: lat,lon column order, wall-clock timestamps
    assert track.lats[0] == 39.984702
    assert track.lons[0] == 116.318417
    np.testing.assert_allclose(np.diff(track.times), [6.0, 5.0, 5.0])


def test_parse_plt_drops_nonincreasing(tmp_path):
    body = PLT_BODY + "39.9,116.3,0,492,0,2008-10-23,02:53:20\n"  # repeat stamp
    p = tmp_path / "dup.plt"
    p.write_text(body, encoding="utf-8")
    assert len(data.parse_plt(p)) == 4


def test_parse_plt_rejects_malformed(tmp_path):
    p = tmp_path / "bad.plt"
    p.write_text(PLT_BODY.replace("39.984683", "not-a-number"), encoding="utf-8")
    with pytest.raises(data.ParseError):
        data.parse_plt(p)
    short = tmp_path / "short.plt"
    short.write_text("\n".join(PLT_BODY.splitlines()[:7]) + "\n", encoding="utf-8")
    with pytest.raises(data.TooShort):
        data.parse_plt(short)


def test_parse_tst_row():
    row = {"TRIP_ID": "t1", "TAXI_ID": "42", "MISSING_DATA": "False",
           "POLYLINE": "[[-8.61, 41.14], [-8.62, 41.15], [-8.63, 41.16]]"}
    track = data.parse_tst(row)
    assert track.track_id == "t1"
    assert track.agent_id == "42"
    assert track.source == "tst"
    np.testing.assert_allclose(track.times, [0.0, 15.0, 30.0])
    np.testing.assert_allclose(track.lons, [-8.61, -8.62, -8.63])
    assert track.meta["MISSING_DATA"] == "False"


def test_parse_tst_rejects_bad_polyline():
    with pytest.raises(data.ParseError):
        data.parse_tst({"POLYLINE": "[[1, 2], [3"})
    with pytest.raises(data.TooShort):
        data.parse_tst({"POLYLINE": "[[1, 2]]"})
    with pytest.raises(data.ParseError):
        data.parse_tst({"POLYLINE": "[[1, 2, 3], [4, 5, 6]]"})


def _ramp_track(n=11, dt_raw=2.0, slope=(0.001, -0.002)):
    t = np.arange(n) * dt_raw
    return data.RawTrack(agent_id="a", track_id="ramp", times=t,
                         lons=10.0 + slope[0] * t, lats=20.0 + slope[1] * t)


def test_preprocess_resamples_linearly():
    cfg = data.PreprocessConfig(dt=5.0, min_length=2)
    traj = data.preprocess(_ramp_track(), cfg)
    # 20 s of track on a 5 s grid -> 5 samples
    assert len(traj) == 5
    np.testing.assert_allclose(traj.times, [0, 5, 10, 15, 20])
    # linear track: interpolation reproduces the ramp exactly, actions are
    # the constant velocity, last action zero-padded
    np.testing.assert_allclose(traj.states[:, 0], 10.0 + 0.001 * traj.times)
    np.testing.assert_allclose(traj.actions[:-1, 0], 0.001, atol=1e-12)
    np.testing.assert_allclose(traj.actions[:-1, 1], -0.002, atol=1e-12)
    np.testing.assert_array_equal(traj.actions[-1], 0.0)
    # initial-position fields are constant
    assert np.all(traj.states[:, 2] == traj.states[0, 0])
    assert np.all(traj.states[:, 3] == traj.states[0, 1])
    assert traj.label is Label.UNLABELED


def test_preprocess_rejects_short():
    cfg = data.PreprocessConfig(dt=5.0, min_length=100)
    assert data.preprocess(_ramp_track(), cfg) is None


def test_preprocess_applies_normalization():
    tracks = [_ramp_track()]
    norm = data.fit_normalization(tracks)
    cfg = data.PreprocessConfig(dt=5.0, min_length=2, normalization=norm)
    traj = data.preprocess(tracks[0], cfg)
    assert abs(traj.states[:, 0].mean()) < 1e-6
    assert abs(traj.states[:, 1].mean()) < 1e-6


def test_preprocess_config_guards():
    with pytest.raises(ValueError):
        data.PreprocessConfig(dt=0.0)
    with pytest.raises(ValueError):
        data.PreprocessConfig(min_length=1)


def test_inject_anomalies_rate_and_labels(rng):
    target = TrajectorySet([make_traj(rng, n=4, traj_id=f"n{i}", agent_id="A")
                            for i in range(18)], role=SetRole.TEST_SET)
    donors = TrajectorySet([make_traj(rng, n=4, traj_id=f"d{i}", agent_id="B")
                            for i in range(10)], role=SetRole.TEST_SET)
    mixed = data.inject_anomalies(target, donors, rate=0.1, rng=rng)
    labels = [t.label for t in mixed]
    n_anom = sum(lab is Label.ANOMALY for lab in labels)
    # rate 0.1 over 18 targets -> 2 injected anomalies
    assert n_anom == 2
    assert sum(lab is Label.NORMAL for lab in labels) == 18
    assert len(list(mixed)) == 20


def test_inject_anomalies_guards(rng):
    tset = TrajectorySet([make_traj(rng, n=4, agent_id="A")], role=SetRole.TEST_SET)
    overlap = TrajectorySet([make_traj(rng, n=4, agent_id="A")], role=SetRole.TEST_SET)
    with pytest.raises(ValueError):
        data.inject_anomalies(tset, overlap, rate=0.1, rng=rng)
    with pytest.raises(ValueError):
        data.inject_anomalies(tset, overlap, rate=1.0, rng=rng)


def test_label_long_trips(rng):
    short = [make_traj(rng, n=5, dt=100.0, traj_id=f"s{i}") for i in range(4)]
    long_ = [make_traj(rng, n=50, dt=100.0, traj_id=f"l{i}") for i in range(2)]
    trips = TrajectorySet(short + long_, role=SetRole.TEST_SET)
    out = data.label_long_trips(trips, cutoff=3000.0)
    by_id = {t.traj_id: t for t in out}
    for t in short:
        assert by_id[t.traj_id].label is Label.NORMAL
        assert len(by_id[t.traj_id]) == len(t)
    crop = int(np.median([len(t) for t in short]))
    for t in long_:
        got = by_id[t.traj_id]
        assert got.label is Label.ANOMALY
        assert len(got) == crop  # cropped so length cannot give it away


def test_label_long_trips_needs_normals(rng):
    only_long = TrajectorySet([make_traj(rng, n=50, dt=100.0)],
                              role=SetRole.TEST_SET)
    with pytest.raises(ValueError):
        data.label_long_trips(only_long, cutoff=10.0)


def test_inject_anomalies_rate_zero_is_identity(rng):
    target = TrajectorySet([make_traj(rng, n=4, traj_id=f"n{i}", agent_id="A")
                            for i in range(8)], role=SetRole.TEST_SET)
    donors = TrajectorySet([make_traj(rng, n=4, traj_id=f"d{i}", agent_id="B")
                            for i in range(3)], role=SetRole.TEST_SET)
    mixed = data.inject_anomalies(target, donors, rate=0.0, rng=rng)
    assert len(list(mixed)) == 8
    assert all(t.label is Label.NORMAL for t in mixed)


def test_inject_anomalies_deterministic_under_seed(rng):
    target = TrajectorySet([make_traj(rng, n=4, traj_id=f"n{i}", agent_id="A")
                            for i in range(18)], role=SetRole.TEST_SET)
    donors = TrajectorySet([make_traj(rng, n=4, traj_id=f"d{i}", agent_id="B")
                            for i in range(10)], role=SetRole.TEST_SET)
    pick = lambda seed: [t.traj_id for t in data.inject_anomalies(
        target, donors, 0.2, np.random.default_rng(seed))]
    assert pick(7) == pick(7)
