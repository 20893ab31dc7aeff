"""Frame-projection checks against a brute-force dense oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qshield.frenet import CORRIDOR_HALF_WIDTH, FrenetState, OutOfCorridorError


def dense_oracle(path, xy, step=0.002):
    """Nearest point by exhaustive arc-length sampling."""
    s_grid = np.arange(0.0, path.length + step, step)
    pts, heads = path.route.batch_point_heading(s_grid)
    d2 = np.sum((pts - xy[None, :]) ** 2, axis=1)
    i = int(np.argmin(d2))
    normal = np.array([-math.sin(heads[i]), math.cos(heads[i])])
    return float(s_grid[i]), float(np.dot(xy - pts[i], normal))


def test_projection_matches_dense_oracle(ego_path, rng):
    for _ in range(200):
        s = rng.uniform(0.0, ego_path.length)
        d = rng.uniform(-3.0, 3.0)
        xy = ego_path.to_world(s, d)
        s_hat, d_hat = ego_path.project(xy)
        s_ref, d_ref = dense_oracle(ego_path, xy)
        assert abs(s_hat - s_ref) < 5e-3
        assert abs(d_hat - d_ref) < 5e-3


def test_round_trip_on_path(ego_path, rng):
    for _ in range(100):
        s = rng.uniform(0.0, ego_path.length)
        xy = ego_path.to_world(s, 0.0)
        s_hat, d_hat = ego_path.project(xy)
        back = ego_path.to_world(s_hat, d_hat)
        assert np.linalg.norm(back - xy) < 1e-6


def test_round_trip_within_lane(ego_path, rng):
    lane = 3.5
    for _ in range(100):
        s = rng.uniform(0.0, ego_path.length)
        d = rng.uniform(-lane, lane)
        xy = ego_path.to_world(s, d)
        s_hat, d_hat = ego_path.project(xy)
        back = ego_path.to_world(s_hat, d_hat)
        assert np.linalg.norm(back - xy) < 1e-3


def test_pure_lateral_offset_straight(straight_path):
    # 1 m left of a point 40 m along an eastbound line sits at y=+1.
    s_hat, d_hat = straight_path.project(np.array([40.0, 1.0]))
    assert abs(s_hat - 40.0) < 1e-9
    assert abs(d_hat - 1.0) < 1e-9


def test_out_of_corridor_raises(straight_path):
    with pytest.raises(OutOfCorridorError):
        straight_path.project(np.array([50.0, CORRIDOR_HALF_WIDTH + 1.0]))


def test_velocity_decomposition(straight_path):
    # Moving at 30 deg off an eastbound line: db = v cos, dd = v sin.
    v, ang = 6.0, math.radians(30.0)
    fs = straight_path.to_frenet(np.array([10.0, 0.0]), v, ang, accel=2.0)
    assert fs.db == pytest.approx(v * math.cos(ang))
    assert fs.dd == pytest.approx(v * math.sin(ang))
    assert fs.ddb == pytest.approx(2.0 * math.cos(ang))
    assert fs.ddd == pytest.approx(2.0 * math.sin(ang))
    assert fs.t == 0.0


def test_from_frenet_restores_speed_heading(straight_path):
    fs = FrenetState(b=25.0, db=4.0, ddb=0.0, d=1.5, dd=3.0, ddd=0.0)
    xy, heading, speed = straight_path.from_frenet(fs)
    assert speed == pytest.approx(5.0)
    assert heading == pytest.approx(math.atan2(3.0, 4.0))
    assert xy == pytest.approx([25.0, 1.5])


@settings(max_examples=60, deadline=None)
@given(s=st.floats(1.0, 99.0), d=st.floats(-8.0, 8.0))
def test_straight_round_trip_property(s, d):
    pts = np.stack([np.linspace(0.0, 100.0, 201), np.zeros(201)], axis=1)
    from qshield.geometry import Route
    from qshield.frenet import ReferencePath
    path = ReferencePath(Route("straight", pts))
    s_hat, d_hat = path.project(np.array([s, d]))
    assert s_hat == pytest.approx(s, abs=1e-9)
    assert d_hat == pytest.approx(d, abs=1e-9)
