import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Polygon

from trldrive.collision import detect_collision, horizon_times, predict_conflict, rect_overlap, states_overlap
from trldrive.vehicle import VehicleState


def corners(cx, cy, psi, hl, hw):
    fx, fy = math.sin(psi), math.cos(psi)  # forward, heading clockwise from +y
    rx, ry = fy, -fx  # right
    return [(cx + a * hl * fx + b * hw * rx, cy + a * hl * fy + b * hw * ry)
            for a, b in ((1, 1), (1, -1), (-1, -1), (-1, 1))]


def test_identical_pose_overlaps():
    a = VehicleState(3.0, 4.0, 0.0, 0.7)
    assert states_overlap(a, a)


def test_far_apart():
    assert not states_overlap(VehicleState(0, 0, 0, 0), VehicleState(50, 0, 0, 0))


def test_axis_aligned_longitudinal_overlap():
    assert states_overlap(VehicleState(0, 0, 0, 0), VehicleState(0, 4.9, 0, 0))
    assert not states_overlap(VehicleState(0, 0, 0, 0), VehicleState(0, 5.1, 0, 0))


def test_detect_collision_reports_first_pair():
    s = [VehicleState(0, 0, 0, 0), VehicleState(0, 30, 0, 0), VehicleState(0, 33, 0, 0)]
    assert detect_collision(s) == (True, (1, 2))
    assert detect_collision(s[:2]) == (False, None)


coord = st.floats(-6, 6)
angle = st.floats(-math.pi, math.pi)
half = st.floats(0.3, 3)


@settings(max_examples=400)
@given(coord, coord, angle, half, half, coord, coord, angle, half, half)
def test_sat_agrees_with_polygon_oracle(x1, y1, p1, l1, w1, x2, y2, p2, l2, w2):
    a = Polygon(corners(x1, y1, p1, l1, w1))
    b = Polygon(corners(x2, y2, p2, l2, w2))
    inter = a.intersection(b).area
    gap = a.distance(b)
    # skip grazing contacts where float rounding decides
    if inter < 1e-9 and gap < 1e-9:
        return
    assert rect_overlap(x1, y1, p1, l1, w1, x2, y2, p2, l2, w2) == (inter > 0)


@given(coord, coord, angle, coord, coord, angle)
def test_overlap_symmetric(x1, y1, p1, x2, y2, p2):
    assert rect_overlap(x1, y1, p1, 2.5, 1, x2, y2, p2, 2.5, 1) == rect_overlap(x2, y2, p2, 2.5, 1, x1, y1, p1, 2.5, 1)


def test_horizon_grid():
    t = horizon_times()
    assert t[0] == 0.0 and t[-1] == pytest.approx(3.0) and len(t) == 13


def test_perpendicular_meeting_at_1_5s():
    # both reach the origin after 1.5 s
    ego = VehicleState(0.0, -15.0, 10.0, 0.0)
    other = VehicleState(-15.0, 0.0, 10.0, math.pi / 2)
    assert predict_conflict(ego, [other])


def test_parallel_lanes_no_conflict():
    ego = VehicleState(0.0, 0.0, 10.0, 0.0)
    other = VehicleState(6.0, 0.0, 10.0, 0.0)
    assert not predict_conflict(ego, [other])


def test_conflict_beyond_horizon_ignored():
    ego = VehicleState(0.0, -40.0, 10.0, 0.0)
    other = VehicleState(-40.0, 0.0, 10.0, math.pi / 2)
    assert not predict_conflict(ego, [other], horizon=3.0)
    assert predict_conflict(ego, [other], horizon=4.0)
