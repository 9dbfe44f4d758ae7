"""Compiled per-tick update of the whole fleet.

Vehicle 0 is the ego vehicle. Surrounding vehicles get IDM acceleration
toward their leader, overridden by hard braking whenever they must yield:

* behind another vehicle on a shared lane, when a rear-end is predicted
  (a leader never brakes for its follower, the ego included);
* to the ego vehicle, whenever a crossing conflict with it is predicted;
* to another surrounding vehicle in a crossing conflict, by a strict
  right-of-way order (see ``_priority``); the lower-ranked vehicle yields
  when braking clears the conflict, otherwise the higher-ranked one does;
* while on the secondary road before the junction, to any main-road vehicle
  whose predicted path crosses its own predicted path.

Predictions move every vehicle at its current speed along its own route.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from trldrive.collision import rect_overlap
from trldrive.vehicle import idm_core, kinematics_core, steering_core

NO_MAP = -1e18
# lanes that split or merge stay physically shared for a few metres past the
# split (or before the merge); a vehicle that close still counts as on the lane
DIVERGE_ALLOWANCE = 4.0
# thinner margin used to break standstills in which only the full margin is violated
FALLBACK_MARGIN = 0.15


@njit(cache=True)
def segment_index(arc, nseg, r, s):
    n = nseg[r]
    lo, hi = 0, n - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if arc[r, mid] <= s:
            lo = mid
        else:
            hi = mid - 1
    return lo


@njit(cache=True)
def route_point(pts, hdg, arc, nseg, r, s):
    n = nseg[r]
    s = min(max(s, 0.0), arc[r, n])
    k = segment_index(arc, nseg, r, s)
    t = (s - arc[r, k]) / (arc[r, k + 1] - arc[r, k])
    x = pts[r, k, 0] + t * (pts[r, k + 1, 0] - pts[r, k, 0])
    y = pts[r, k, 1] + t * (pts[r, k + 1, 1] - pts[r, k, 1])
    h0 = hdg[r, k]
    dh = (hdg[r, k + 1] - h0 + math.pi) % (2.0 * math.pi) - math.pi
    return x, y, h0 + t * dh


@njit(cache=True)
def project_point(pts, hdg, arc, nseg, r, hint, x, y):
    """Closest point of route ``r`` near segment ``hint``: (s, offset, heading, segment)."""
    n = nseg[r]
    k0 = max(hint - 4, 0)
    k1 = min(hint + 12, n)
    best = 1e300
    bk, bt, boff = k0, 0.0, 0.0
    for k in range(k0, k1):
        dx = pts[r, k + 1, 0] - pts[r, k, 0]
        dy = pts[r, k + 1, 1] - pts[r, k, 1]
        dd = dx * dx + dy * dy
        qx = x - pts[r, k, 0]
        qy = y - pts[r, k, 1]
        t = min(max((qx * dx + qy * dy) / dd, 0.0), 1.0)
        rx = qx - t * dx
        ry = qy - t * dy
        d2 = rx * rx + ry * ry
        if d2 < best:
            best = d2
            bk, bt = k, t
            boff = (rx * dy - ry * dx) / math.sqrt(dd)
    h0 = hdg[r, bk]
    dh = (hdg[r, bk + 1] - h0 + math.pi) % (2.0 * math.pi) - math.pi
    s = arc[r, bk] + bt * (arc[r, bk + 1] - arc[r, bk])
    return s, boff, h0 + bt * dh, bk


@njit(cache=True)
def map_onto(ra, rb, sb, reach, rlen, pre_end, suf_start):
    """Arc length on route ``ra`` of a vehicle at ``sb`` on route ``rb``, or
    NO_MAP if no part of it (within ``reach`` of its center) is on a lane
    segment the two routes share."""
    if ra == rb:
        return sb
    if sb - reach < pre_end[ra, rb]:
        return sb
    if sb + reach >= suf_start[ra, rb]:
        return sb + rlen[ra] - rlen[rb]
    return NO_MAP


# brake reasons reported per vehicle
RULE_NONE, RULE_REAR, RULE_YIELD, RULE_LET_CLEAR, RULE_EMERGENCY, RULE_GIVE_WAY = range(6)


@njit(cache=True)
def _mark(brake, why, partner, i, j, rule):
    if not brake[i]:
        why[i] = rule
        partner[i] = j
    brake[i] = True


@njit(cache=True)
def _priority(i, s, route, crashed, rmain, rleft, rentry):
    """Right-of-way score; the higher one keeps going, ties go to the lower index.

    Ego first, then crashed wrecks (they cannot move), then vehicles already
    in the junction by progress, then main road, then non-left movements,
    then whoever is closer to the junction.
    """
    if i == 0:
        return 1e12
    if crashed[i]:
        return 1e11
    r = route[i]
    p = s[i] - rentry[r]
    if p >= 0.0:
        return 1e9 + p
    score = p
    if rmain[r]:
        score += 1e6
    if not rleft[r]:
        score += 1e3
    return score


@njit(cache=True)
def _hits(ax, ay, ah, bx, by, bh, length, width, hl, hw, radius, i, j, H):
    """Do footprint sequences ``a`` of ``i`` and ``b`` of ``j`` overlap at a common time?

    The current poses (h = 0) are tested unpadded, predictions with the
    half extents ``hl``, ``hw``.
    """
    reach = radius[i] + radius[j]
    for h in range(H):
        if math.hypot(ax[h, i] - bx[h, j], ay[h, i] - by[h, j]) > reach:
            continue
        if h == 0:
            hit = rect_overlap(ax[0, i], ay[0, i], ah[0, i], 0.5 * length[i], 0.5 * width[i],
                               bx[0, j], by[0, j], bh[0, j], 0.5 * length[j], 0.5 * width[j])
        else:
            hit = rect_overlap(ax[h, i], ay[h, i], ah[h, i], hl[i], hw[i],
                               bx[h, j], by[h, j], bh[h, j], hl[j], hw[j])
        if hit:
            return True
    return False


@njit(cache=True)
def world_tick(
    x, y, v, psi, beta, length, width, route, hint, s, active, crashed, v_max, v_des, brake, why, partner,
    pts, hdg, arc, nseg, rlen, rmain, rleft, rentry, rexit, pre_end, suf_start,
    ego_accel, dt, kp_psi, kp_lat, delta_max, v_eps,
    a_max, b_abs, time_gap, d0, lam, b_hard, horizon, hstep, margin,
):
    """Advance all vehicles one tick in place; returns (ego_collided, ego_step_distance)."""
    V = x.shape[0]
    H = int(round(horizon / hstep)) + 1
    delta = np.zeros(V)
    for i in range(V):
        if active[i]:
            si, off, lh, k = project_point(pts, hdg, arc, nseg, route[i], hint[i], x[i], y[i])
            s[i] = si
            hint[i] = k
            delta[i] = steering_core(off, lh, psi[i], v[i], length[i], kp_psi, kp_lat, delta_max, v_eps)

    # predicted footprints along each route, at constant speed (f*) and
    # under hard braking (b*)
    fx = np.zeros((H, V))
    fy = np.zeros((H, V))
    fh = np.zeros((H, V))
    bx = np.zeros((H, V))
    by = np.zeros((H, V))
    bh = np.zeros((H, V))
    for i in range(V):
        if not active[i]:
            continue
        x0, y0, _ = route_point(pts, hdg, arc, nseg, route[i], s[i])
        t_stop = v[i] / b_hard
        for h in range(H):
            if h == 0:
                fx[h, i], fy[h, i], fh[h, i] = x[i], y[i], psi[i]
                bx[h, i], by[h, i], bh[h, i] = x[i], y[i], psi[i]
                continue
            t = h * hstep
            px, py, ph = route_point(pts, hdg, arc, nseg, route[i], s[i] + v[i] * t)
            fx[h, i] = x[i] + px - x0
            fy[h, i] = y[i] + py - y0
            fh[h, i] = ph
            tb = min(t, t_stop)
            px, py, ph = route_point(pts, hdg, arc, nseg, route[i], s[i] + v[i] * tb - 0.5 * b_hard * tb * tb)
            bx[h, i] = x[i] + px - x0
            by[h, i] = y[i] + py - y0
            bh[h, i] = ph
    # predicted footprints are inflated by ``margin`` to absorb tracking error
    radius = np.empty(V)
    hl = np.empty(V)
    hw = np.empty(V)
    for i in range(V):
        radius[i] = math.hypot(0.5 * length[i], 0.5 * width[i])
        hl[i] = 0.5 * length[i] + margin
        hw[i] = 0.5 * width[i] + margin
    rl = np.empty(V)
    rw = np.empty(V)
    rradius = np.empty(V)
    for i in range(V):
        rl[i] = 0.5 * length[i] + FALLBACK_MARGIN
        rw[i] = 0.5 * width[i] + FALLBACK_MARGIN
        rradius[i] = math.hypot(rl[i], rw[i])
    pradius = np.empty(V)
    for i in range(V):
        pradius[i] = math.hypot(hl[i], hw[i])

    for i in range(V):
        brake[i] = False
        why[i] = 0
        partner[i] = -1
    for i in range(V):
        if not active[i]:
            continue
        for j in range(i + 1, V):
            if not active[j]:
                continue
            if not _hits(fx, fy, fh, fx, fy, fh, length, width, hl, hw, pradius, i, j, H):
                continue
            # on a shared lane only the follower can resolve it; an ego follower is on its own
            sj_on_i = map_onto(route[i], route[j], s[j], 0.5 * length[j] + DIVERGE_ALLOWANCE, rlen, pre_end, suf_start)
            if sj_on_i != NO_MAP:
                f = i if sj_on_i > s[i] else j
                if f > 0 and not crashed[f]:
                    _mark(brake, why, partner, f, i + j - f, RULE_REAR)
                continue
            pi = _priority(i, s, route, crashed, rmain, rleft, rentry)
            pj = _priority(j, s, route, crashed, rmain, rleft, rentry)
            hi, lo = (i, j) if pi >= pj else (j, i)
            # the lower-priority vehicle yields if braking gets it clear; otherwise
            # the other yields and lets it clear out; both brake if neither can
            lo_helps = not crashed[lo] and not _hits(bx, by, bh, fx, fy, fh, length, width, hl, hw, pradius, lo, hi, H)
            if lo_helps:
                _mark(brake, why, partner, lo, hi, RULE_YIELD)
                continue
            hi_helps = hi > 0 and not crashed[hi] and not _hits(bx, by, bh, fx, fy, fh, length, width, hl, hw, pradius, hi, lo, H)
            if hi_helps:
                _mark(brake, why, partner, hi, lo, RULE_LET_CLEAR)
            elif not _hits(bx, by, bh, fx, fy, fh, length, width, rl, rw, rradius, lo, hi, H):
                # only the outer safety margin is violated: hold the lower-ranked one
                # and let the other move off, or both would wait forever
                if not crashed[lo]:
                    _mark(brake, why, partner, lo, hi, RULE_YIELD)
            else:
                if hi > 0 and not crashed[hi]:
                    _mark(brake, why, partner, hi, lo, RULE_EMERGENCY)
                if not crashed[lo]:
                    _mark(brake, why, partner, lo, hi, RULE_EMERGENCY)

    # give way on the secondary road
    for i in range(1, V):
        if brake[i] or not active[i] or crashed[i] or rmain[route[i]] or s[i] >= rentry[route[i]]:
            continue
        for j in range(1, V):
            if brake[i]:
                break
            if not active[j] or not rmain[route[j]] or s[j] >= rexit[route[j]]:
                continue
            if brake[j] and partner[j] == i and why[j] == RULE_LET_CLEAR:
                continue  # j is already waiting for i to get out of its way
            reach = pradius[i] + pradius[j]
            for a in range(H):
                if brake[i]:
                    break
                for b in range(H):
                    if math.hypot(fx[a, i] - fx[b, j], fy[a, i] - fy[b, j]) > reach:
                        continue
                    if rect_overlap(fx[a, i], fy[a, i], fh[a, i], hl[i], hw[i],
                                    fx[b, j], fy[b, j], fh[b, j], hl[j], hw[j]):
                        _mark(brake, why, partner, i, j, RULE_GIVE_WAY)
                        break

    accel = np.zeros(V)
    accel[0] = ego_accel
    for i in range(1, V):
        if not active[i] or crashed[i]:
            continue
        if brake[i]:
            accel[i] = -b_hard
            continue
        gap = 1e6
        dv = 0.0
        for j in range(V):
            if j == i or not active[j]:
                continue
            sj = map_onto(route[i], route[j], s[j], 0.5 * length[j] + DIVERGE_ALLOWANCE, rlen, pre_end, suf_start)
            if sj == NO_MAP or sj <= s[i]:
                continue
            g = sj - s[i] - 0.5 * (length[i] + length[j])
            if g < gap:
                gap = g
                dv = v[i] - v[j] * math.cos(psi[j] - psi[i])
        accel[i] = idm_core(v[i], dv, max(gap, 0.1), a_max, b_abs, time_gap, d0, lam, v_des[i], b_hard)

    x_prev, y_prev = x[0], y[0]
    for i in range(V):
        if not active[i]:
            continue
        if crashed[i]:
            v[i] = 0.0
            beta[i] = 0.0
            continue
        x[i], y[i], v[i], psi[i], beta[i] = kinematics_core(
            x[i], y[i], v[i], psi[i], length[i], accel[i], delta[i], dt, v_max[i]
        )
    for i in range(1, V):
        if active[i] and s[i] >= rlen[route[i]] - 1.0:
            active[i] = False

    ego_hit = False
    for i in range(V):
        if not active[i]:
            continue
        for j in range(i + 1, V):
            if not active[j]:
                continue
            if math.hypot(x[i] - x[j], y[i] - y[j]) > radius[i] + radius[j]:
                continue
            if rect_overlap(x[i], y[i], psi[i], 0.5 * length[i], 0.5 * width[i],
                            x[j], y[j], psi[j], 0.5 * length[j], 0.5 * width[j]):
                if i == 0:
                    ego_hit = True
                else:
                    crashed[i] = True
                    crashed[j] = True
                    v[i] = 0.0
                    v[j] = 0.0
    return ego_hit, math.hypot(x[0] - x_prev, y[0] - y_prev)


def shared_lane_tables(lanes, tol: float = 1e-6, step: float = 0.05):
    """Shared-prefix end and shared-suffix start (in the second route's arc
    length) for every ordered pair of lanes."""
    R = len(lanes)
    pre_end = np.zeros((R, R))
    suf_start = np.full((R, R), np.inf)
    for a in range(R):
        for b in range(R):
            la, lb = lanes[a], lanes[b]
            if a == b:
                pre_end[a, b] = la.length
                suf_start[a, b] = 0.0
                continue
            L = min(la.length, lb.length)
            u = np.arange(0.0, L, step)
            pa = np.stack([np.interp(u, la.s, la.points[:, 0]), np.interp(u, la.s, la.points[:, 1])], 1)
            pb = np.stack([np.interp(u, lb.s, lb.points[:, 0]), np.interp(u, lb.s, lb.points[:, 1])], 1)
            same = np.hypot(*(pa - pb).T) < tol
            if same[0]:
                pre_end[a, b] = u[np.argmin(same)] if not same.all() else L
            ua = la.length - u
            ub = lb.length - u
            pa = np.stack([np.interp(ua, la.s, la.points[:, 0]), np.interp(ua, la.s, la.points[:, 1])], 1)
            pb = np.stack([np.interp(ub, lb.s, lb.points[:, 0]), np.interp(ub, lb.s, lb.points[:, 1])], 1)
            same = np.hypot(*(pa - pb).T) < tol
            if same[0]:
                n_same = np.argmin(same) if not same.all() else len(same)
                suf_start[a, b] = lb.length - u[n_same - 1]
    return pre_end, suf_start
