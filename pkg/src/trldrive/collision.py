"""Oriented-rectangle overlap (separating axis test) and conflict prediction."""

from __future__ import annotations

import math
from typing import Sequence

from numba import njit

from trldrive.vehicle import VehicleState

PREDICTION_HORIZON = 3.0
PREDICTION_STEP = 0.25


@njit(cache=True)
def rect_overlap(cx1, cy1, psi1, hl1, hw1, cx2, cy2, psi2, hl2, hw2):
    """SAT test for two rectangles given by center, heading and half extents.

    Touching edges count as overlap.
    """
    f1x, f1y = math.sin(psi1), math.cos(psi1)
    f2x, f2y = math.sin(psi2), math.cos(psi2)
    dx, dy = cx2 - cx1, cy2 - cy1
    ff = abs(f1x * f2x + f1y * f2y)  # |f1.f2| == |r1.r2|
    fr = abs(f1x * f2y - f1y * f2x)  # |f1.r2| == |r1.f2|
    if abs(dx * f1x + dy * f1y) > hl1 + hl2 * ff + hw2 * fr:
        return False
    if abs(dx * f1y - dy * f1x) > hw1 + hl2 * fr + hw2 * ff:
        return False
    if abs(dx * f2x + dy * f2y) > hl2 + hl1 * ff + hw1 * fr:
        return False
    if abs(dx * f2y - dy * f2x) > hw2 + hl1 * fr + hw1 * ff:
        return False
    return True


def states_overlap(a: VehicleState, b: VehicleState) -> bool:
    return rect_overlap(
        a.s_x, a.s_y, a.psi, a.length_l / 2, a.width / 2,
        b.s_x, b.s_y, b.psi, b.length_l / 2, b.width / 2,
    )


def detect_collision(states: Sequence[VehicleState]) -> tuple[bool, tuple[int, int] | None]:
    """First overlapping pair ``(i, j)`` with ``i < j``, in index order."""
    for i in range(len(states)):
        for j in range(i + 1, len(states)):
            if states_overlap(states[i], states[j]):
                return True, (i, j)
    return False, None


def horizon_times(horizon: float = PREDICTION_HORIZON, step: float = PREDICTION_STEP) -> list[float]:
    return [k * step for k in range(int(round(horizon / step)) + 1)]


def _advance(s: VehicleState, t: float) -> tuple[float, float]:
    return s.s_x + t * s.v * math.sin(s.psi), s.s_y + t * s.v * math.cos(s.psi)


def predict_conflict(
    vehicle: VehicleState,
    others: Sequence[VehicleState],
    horizon: float = PREDICTION_HORIZON,
    step: float = PREDICTION_STEP,
) -> bool:
    """True if ``vehicle`` overlaps any of ``others`` at a common time within
    ``horizon`` when every vehicle keeps its current velocity."""
    for t in horizon_times(horizon, step):
        x0, y0 = _advance(vehicle, t)
        for o in others:
            x1, y1 = _advance(o, t)
            if rect_overlap(
                x0, y0, vehicle.psi, vehicle.length_l / 2, vehicle.width / 2,
                x1, y1, o.psi, o.length_l / 2, o.width / 2,
            ):
                return True
    return False
