"""Intersection geometry: lane centerlines, routes and driving tasks.

One lane per direction, right-hand traffic, centered on the origin. The
horizontal road is the main road. Turns are circular arcs tangent to the
straight lane centerlines on both ends.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from trldrive.vehicle import wrap_angle


def wrap_angles(a: np.ndarray) -> np.ndarray:
    return np.pi - np.mod(np.pi - a, 2.0 * np.pi)


APPROACHES = ("south", "west", "north", "east")
# heading of traffic entering from each approach (clockwise from +y)
APPROACH_HEADING = {"south": 0.0, "west": math.pi / 2, "north": math.pi, "east": -math.pi / 2}
MAIN_ROAD = frozenset({"west", "east"})
MOVEMENTS = ("left", "straight", "right")


class Task(str, enum.Enum):
    LEFT = "left"
    STRAIGHT = "straight"
    RIGHT = "right"

    @classmethod
    def parse(cls, value) -> "Task":
        if isinstance(value, Task):
            return value
        aliases = {"leftturn": "left", "rightturn": "right", "left_turn": "left", "right_turn": "right"}
        key = str(value).strip().lower()
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class Projection:
    s: float
    offset: float
    heading: float
    index: int


class LaneRef:
    """A centerline sampled densely along arc length.

    ``offset`` returned by :meth:`project` is signed, positive to the right
    of the direction of travel.
    """

    def __init__(self, points: np.ndarray, headings: np.ndarray):
        points = np.asarray(points, dtype=float)
        headings = np.asarray(headings, dtype=float)
        if points.ndim != 2 or points.shape[1] != 2 or len(points) < 2:
            raise ValueError("centerline needs at least two (x, y) points")
        seg = np.diff(points, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0):
            raise ValueError("centerline arc length must be strictly increasing")
        self.points = points
        self.headings = headings
        self.s = np.concatenate([[0.0], np.cumsum(seg_len)])

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def __len__(self):
        return len(self.points)

    def lane_heading_at(self, s: float) -> float:
        s = min(max(s, 0.0), self.length)
        k = int(np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.s) - 2))
        t = (s - self.s[k]) / (self.s[k + 1] - self.s[k])
        h0 = self.headings[k]
        return float(wrap_angle(h0 + t * wrap_angle(self.headings[k + 1] - h0)))

    def point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length)
        return np.array([np.interp(s, self.s, self.points[:, 0]), np.interp(s, self.s, self.points[:, 1])])

    def project(self, x: float, y: float, hint: int | None = None, window: tuple[int, int] = (-4, 12)) -> Projection:
        n_seg = len(self.points) - 1
        if hint is None:
            ks = np.arange(n_seg)
        else:
            ks = np.arange(max(hint + window[0], 0), min(hint + window[1], n_seg))
            if len(ks) == 0:
                ks = np.array([min(max(hint, 0), n_seg - 1)])
        p0 = self.points[ks]
        d = self.points[ks + 1] - p0
        dd = np.einsum("ij,ij->i", d, d)
        q = np.array([x, y]) - p0
        t = np.clip(np.einsum("ij,ij->i", q, d) / dd, 0.0, 1.0)
        foot = p0 + t[:, None] * d
        dist2 = np.sum((np.array([x, y]) - foot) ** 2, axis=1)
        j = int(np.argmin(dist2))
        k = int(ks[j])
        dx, dy = d[j]
        rel = np.array([x, y]) - foot[j]
        offset = (rel[0] * dy - rel[1] * dx) / math.sqrt(dd[j])
        h0 = self.headings[k]
        heading = wrap_angle(h0 + t[j] * wrap_angle(self.headings[k + 1] - h0))
        s = self.s[k] + t[j] * (self.s[k + 1] - self.s[k])
        return Projection(float(s), float(offset), float(heading), k)

    def lateral_offset_of(self, x: float, y: float) -> float:
        return self.project(x, y).offset


def _rotate_cw(xy: np.ndarray, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.stack([xy[..., 0] * c + xy[..., 1] * s, -xy[..., 0] * s + xy[..., 1] * c], axis=-1)


def _straight(p0, heading, length, ds):
    n = max(int(math.ceil(length / ds)), 1)
    u = np.linspace(0.0, length, n + 1)
    pts = np.stack([p0[0] + u * math.sin(heading), p0[1] + u * math.cos(heading)], axis=1)
    return pts, np.full(n + 1, heading)


def _arc(center, radius, heading0, sweep, ds):
    """Arc starting with heading ``heading0``; ``sweep`` > 0 turns clockwise (right)."""
    n = max(int(math.ceil(abs(sweep) * radius / ds)), 2)
    h = heading0 + np.linspace(0.0, sweep, n + 1)
    # the center sits to the right of travel for right turns, to the left for left turns
    side = 1.0 if sweep > 0 else -1.0
    # position = center - side * radius * right_normal(h)
    pts = np.stack(
        [center[0] - side * radius * np.cos(h), center[1] + side * radius * np.sin(h)],
        axis=1,
    )
    return pts, h


def _join(pieces):
    pts = [pieces[0][0]]
    hs = [pieces[0][1]]
    for p, h in pieces[1:]:
        pts.append(p[1:])
        hs.append(h[1:])
    return np.concatenate(pts), np.concatenate(hs)


@dataclass(frozen=True)
class Route:
    origin: str
    movement: str
    lane: LaneRef = field(repr=False, compare=False)
    is_main: bool
    s_entry: float  # arc length where the route enters the junction box
    s_exit: float  # arc length where it leaves the box

    @property
    def name(self) -> str:
        return f"{self.origin}-{self.movement}"


@dataclass(frozen=True)
class RoadLayout:
    lane_width: float = 4.0
    approach_length: float = 100.0
    exit_length: float = 100.0
    right_radius: float = 6.0
    left_radius: float = 10.0
    sample_step: float = 0.25

    @property
    def box_half(self) -> float:
        return self.lane_width

    def build_route(self, origin: str, movement: str) -> Route:
        if origin not in APPROACHES or movement not in MOVEMENTS:
            raise ValueError(f"unknown route {origin}-{movement}")
        w2 = self.lane_width / 2
        L_in, L_out, ds = self.approach_length, self.exit_length, self.sample_step
        # built for the south approach (northbound at x=+w/2), then rotated
        if movement == "straight":
            pieces = [_straight((w2, -L_in), 0.0, L_in + L_out, ds)]
        elif movement == "right":
            r = self.right_radius
            y0 = -w2 - r
            pieces = [
                _straight((w2, -L_in), 0.0, L_in + y0, ds),
                _arc((w2 + r, y0), r, 0.0, math.pi / 2, ds),
                _straight((w2 + r, -w2), math.pi / 2, L_out - (w2 + r), ds),
            ]
        else:
            r = self.left_radius
            y0 = w2 - r
            pieces = [
                _straight((w2, -L_in), 0.0, L_in + y0, ds),
                _arc((w2 - r, y0), r, 0.0, -math.pi / 2, ds),
                _straight((w2 - r, w2), -math.pi / 2, L_out - (r - w2), ds),
            ]
        pts, hs = _join(pieces)
        theta = APPROACH_HEADING[origin]
        pts = _rotate_cw(pts, theta)
        hs = wrap_angles(hs + theta)
        lane = LaneRef(pts, hs)
        box = self.box_half
        inside = np.all(np.abs(lane.points) <= box + 1e-9, axis=1)
        idx = np.flatnonzero(inside)
        return Route(
            origin=origin,
            movement=movement,
            lane=lane,
            is_main=origin in MAIN_ROAD,
            s_entry=float(lane.s[idx[0]]),
            s_exit=float(lane.s[idx[-1]]),
        )

    def routes(self) -> list[Route]:
        return [self.build_route(o, m) for o in APPROACHES for m in MOVEMENTS]


@dataclass(frozen=True)
class TaskSpec:
    """Fixed start and destination of the ego vehicle for one driving task.

    The ego vehicle always enters from the south (secondary road).
    """

    task: Task
    start_distance: float = 15.0
    goal_distance: float = 30.0
    goal_radius: float = 3.0
    origin: str = "south"

    def route(self, layout: RoadLayout) -> Route:
        if self.start_distance >= layout.approach_length or self.goal_distance >= layout.exit_length:
            raise ValueError("task start/goal lie outside the modelled roads")
        return layout.build_route(self.origin, self.task.value)

    def goal_point(self, layout: RoadLayout) -> np.ndarray:
        w2 = layout.lane_width / 2
        g = self.goal_distance
        local = {"left": (-g, w2), "straight": (w2, g), "right": (g, -w2)}[self.task.value]
        return _rotate_cw(np.array(local, dtype=float), APPROACH_HEADING[self.origin])

    def start_s(self, layout: RoadLayout) -> float:
        return layout.approach_length - self.start_distance
