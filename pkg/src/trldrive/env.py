"""Priority-controlled four-way intersection with one learning ego vehicle.

Index 0 of every fleet array is the ego vehicle; the rest are surrounding
vehicles driven by IDM plus predictive braking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from trldrive import collision
from trldrive.road import APPROACHES, MOVEMENTS, RoadLayout, Task, TaskSpec
from trldrive.vehicle import DEFAULT_LENGTH, DEFAULT_WIDTH, IdmParams, LateralGains
from trldrive.vehicle import wrap_angle
from trldrive.world import DIVERGE_ALLOWANCE, NO_MAP, map_onto, route_point, segment_index, shared_lane_tables, world_tick

ACCEL_LEVELS = (-5.0, 0.0, 5.0)
N_ACTIONS = len(ACCEL_LEVELS)


class EnvError(RuntimeError):
    """Raised when the scenario cannot be built (e.g. spawning fails)."""


class EnvUsageError(RuntimeError):
    """Raised when the environment is driven out of protocol."""


@dataclass(frozen=True)
class EnvConfig:
    sim_hz: float = 20.0
    episode_duration: float = 15.0
    n_vehicles: int = 15
    decision_period: float = 1.0
    n_observed: int = 15
    seed: int = 0
    v_cap: float = 12.0
    highest_speed_tol: float = 0.5
    pos_scale: float = 100.0
    speed_scale: float = 20.0
    spawn_offset_min: float = 15.0
    spawn_offset_max: float = 80.0
    spawn_speed_min: float = 5.0
    spawn_speed_max: float = 12.0
    spawn_margin: float = 2.0
    max_spawn_attempts: int = 1000
    prediction_horizon: float = collision.PREDICTION_HORIZON
    prediction_step: float = collision.PREDICTION_STEP
    prediction_margin: float = 0.5
    vehicle_length: float = DEFAULT_LENGTH
    vehicle_width: float = DEFAULT_WIDTH
    idm: IdmParams = field(default_factory=IdmParams)
    gains: LateralGains = field(default_factory=LateralGains)
    layout: RoadLayout = field(default_factory=RoadLayout)

    def __post_init__(self):
        if self.sim_hz <= 0:
            raise ValueError("sim_hz must be positive")
        ticks = self.decision_period * self.sim_hz
        if self.decision_period <= 0 or abs(ticks - round(ticks)) > 1e-9:
            raise ValueError("decision_period must be an integer multiple of 1/sim_hz")
        if self.n_vehicles < 0 or self.n_observed < 0:
            raise ValueError("vehicle counts must be non-negative")
        if not 0 <= self.spawn_offset_min <= self.spawn_offset_max < self.layout.approach_length:
            raise ValueError("spawn offsets must lie on the approach roads")

    @property
    def dt(self) -> float:
        return 1.0 / self.sim_hz

    @property
    def ticks_per_decision(self) -> int:
        return int(round(self.decision_period * self.sim_hz))

    @property
    def max_ticks(self) -> int:
        return int(round(self.episode_duration * self.sim_hz))

    @property
    def decisions_per_episode(self) -> int:
        return int(math.ceil(self.max_ticks / self.ticks_per_decision))

    @property
    def obs_dim(self) -> int:
        return 4 * (1 + self.n_observed)


def compute_reward(reached_goal: bool, highest_speed: bool, collision: bool) -> float:
    if reached_goal:
        return 1.0
    return 1.0 * bool(highest_speed) - 5.0 * bool(collision)


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict

    def __iter__(self):
        return iter((self.observation, self.reward, self.done, self.info))


def observe_arrays(x, y, vx, vy, active, n_observed, pos_scale, speed_scale) -> np.ndarray:
    """Ego block first, then active surrounding vehicles nearest-first, zero padded."""
    obs = np.zeros(4 * (1 + n_observed))
    obs[:4] = (x[0] / pos_scale, y[0] / pos_scale, vx[0] / speed_scale, vy[0] / speed_scale)
    others = np.flatnonzero(active[1:]) + 1
    if len(others) and n_observed:
        dist = np.hypot(x[others] - x[0], y[others] - y[0])
        order = others[np.argsort(dist, kind="stable")][:n_observed]
        block = np.stack([x[order] / pos_scale, y[order] / pos_scale, vx[order] / speed_scale, vy[order] / speed_scale], axis=1)
        obs[4 : 4 + block.size] = block.ravel()
    return obs


class IntersectionEnv:
    """Gym-style facade: ``reset(seed)`` then ``step(action)`` until ``done``."""

    def __init__(self, config: EnvConfig = EnvConfig(), task: TaskSpec | Task | str = Task.RIGHT):
        self.config = config
        self.task = task if isinstance(task, TaskSpec) else TaskSpec(Task.parse(task))
        layout = config.layout
        self.routes = layout.routes()
        self.route_index = {(r.origin, r.movement): k for k, r in enumerate(self.routes)}
        self.ego_route = self.route_index[(self.task.origin, self.task.task.value)]
        self.goal = self.task.goal_point(layout)
        self._pack_routes()
        self._ready = False
        self.done = True

    def _pack_routes(self):
        n_max = max(len(r.lane) for r in self.routes)
        R = len(self.routes)
        self._pts = np.zeros((R, n_max, 2))
        self._hdg = np.zeros((R, n_max))
        self._arc = np.zeros((R, n_max))
        self._nseg = np.zeros(R, dtype=int)
        for k, r in enumerate(self.routes):
            n = len(r.lane)
            self._pts[k, :n] = r.lane.points
            self._hdg[k, :n] = r.lane.headings
            self._arc[k, :n] = r.lane.s
            self._nseg[k] = n - 1
        self._route_len = np.array([r.lane.length for r in self.routes])
        self._route_main = np.array([r.is_main for r in self.routes])
        self._route_entry = np.array([r.s_entry for r in self.routes])
        self._route_exit = np.array([r.s_exit for r in self.routes])
        self._route_left = np.array([r.movement == "left" for r in self.routes])
        self._pre_end, self._suf_start = shared_lane_tables([r.lane for r in self.routes])

    @property
    def obs_dim(self) -> int:
        return self.config.obs_dim

    @property
    def n_actions(self) -> int:
        return N_ACTIONS

    # ------------------------------------------------------------------ reset
    def reset(self, seed: int | None = None) -> np.ndarray:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        V = 1 + cfg.n_vehicles
        self.x = np.zeros(V)
        self.y = np.zeros(V)
        self.v = np.zeros(V)
        self.psi = np.zeros(V)
        self.beta = np.zeros(V)
        self.length = np.full(V, cfg.vehicle_length)
        self.width = np.full(V, cfg.vehicle_width)
        self.route = np.zeros(V, dtype=int)
        self.hint = np.zeros(V, dtype=int)
        self.s = np.zeros(V)
        self.active = np.ones(V, dtype=bool)
        self.crashed = np.zeros(V, dtype=bool)
        self.v_max = np.full(V, np.inf)
        self.v_max[0] = cfg.v_cap
        self.v_des = np.full(V, cfg.idm.v_desired)
        self.brake = np.zeros(V, dtype=bool)
        self.brake_rule = np.zeros(V, dtype=np.int64)
        self.brake_partner = np.full(V, -1, dtype=np.int64)

        self._place(0, self.ego_route, self.task.start_s(cfg.layout), 0.0)
        for k in range(1, V):
            for _ in range(cfg.max_spawn_attempts):
                origin = APPROACHES[int(rng.integers(len(APPROACHES)))]
                movement = MOVEMENTS[int(rng.integers(len(MOVEMENTS)))]
                offset = rng.uniform(cfg.spawn_offset_min, cfg.spawn_offset_max)
                speed = rng.uniform(cfg.spawn_speed_min, cfg.spawn_speed_max)
                r = self.route_index[(origin, movement)]
                self._place(k, r, cfg.layout.approach_length - offset, speed)
                if not self._spawn_overlaps(k):
                    break
            else:
                raise EnvError(f"could not place vehicle {k} after {cfg.max_spawn_attempts} attempts")

        self.tick = 0
        self.decision = 0
        self._ready = True
        self.done = False
        self.last_info: dict = {}
        return self.observe()

    def _place(self, k, route, s, speed):
        x, y, heading = route_point(self._pts, self._hdg, self._arc, self._nseg, route, s)
        self.x[k], self.y[k], self.psi[k] = x, y, wrap_angle(heading)
        self.v[k] = speed
        self.route[k] = route
        self.hint[k] = segment_index(self._arc, self._nseg, route, s)
        self.s[k] = s

    def _spawn_overlaps(self, k) -> bool:
        """Reject a spawn that overlaps another vehicle or cannot stop behind its leader."""
        m = self.config.spawn_margin
        b = self.config.idm.b_hard
        for j in range(k):
            if collision.rect_overlap(
                self.x[k], self.y[k], self.psi[k], self.length[k] / 2 + m, self.width[k] / 2,
                self.x[j], self.y[j], self.psi[j], self.length[j] / 2 + m, self.width[j] / 2,
            ):
                return True
            sj = map_onto(self.route[k], self.route[j], self.s[j], self.length[j] / 2 + DIVERGE_ALLOWANCE,
                          self._route_len, self._pre_end, self._suf_start)
            if sj == NO_MAP:
                continue
            back, front = (k, j) if sj > self.s[k] else (j, k)
            gap = abs(sj - self.s[k]) - 0.5 * (self.length[k] + self.length[j])
            if gap < m + max(self.v[back] ** 2 - self.v[front] ** 2, 0.0) / (2.0 * b):
                return True
        return False

    # ---------------------------------------------------------------- observe
    def velocity_xy(self):
        return self.v * np.sin(self.psi + self.beta), self.v * np.cos(self.psi + self.beta)

    def observe(self) -> np.ndarray:
        cfg = self.config
        vx, vy = self.velocity_xy()
        return observe_arrays(self.x, self.y, vx, vy, self.active, cfg.n_observed, cfg.pos_scale, cfg.speed_scale)

    # ------------------------------------------------------------------- step
    def step(self, action: int) -> StepOutcome:
        if not self._ready or self.done:
            raise EnvUsageError("step() called on an environment that is done or not reset")
        if action not in range(N_ACTIONS):
            raise EnvUsageError(f"action must be in 0..{N_ACTIONS - 1}, got {action!r}")
        cfg = self.config
        accel = ACCEL_LEVELS[action]
        collided = reached = False
        distance = 0.0
        speeds = []
        for _ in range(cfg.ticks_per_decision):
            d, ego_hit, reached = self._tick(accel)
            distance += d
            speeds.append(self.v[0])
            collided = collided or ego_hit
            if collided or reached or self.tick >= cfg.max_ticks:
                break
        self.decision += 1
        highest = bool(self.v[0] >= cfg.v_cap - cfg.highest_speed_tol)
        reward = compute_reward(reached, highest, collided)
        self.done = collided or reached or self.tick >= cfg.max_ticks
        info = {
            "collision": collided,
            "reached_goal": reached,
            "highest_speed": highest,
            "elapsed": self.tick / cfg.sim_hz,
            "distance": distance,
            "mean_speed": float(np.mean(speeds)),
            "ticks": len(speeds),
            "npc_collisions": int(self.crashed[1:].sum()),
        }
        self.last_info = info
        return StepOutcome(self.observe(), reward, self.done, info)

    def _tick(self, ego_accel: float):
        cfg = self.config
        g, p = cfg.gains, cfg.idm
        ego_hit, step_dist = world_tick(
            self.x, self.y, self.v, self.psi, self.beta, self.length, self.width,
            self.route, self.hint, self.s, self.active, self.crashed, self.v_max, self.v_des, self.brake,
            self.brake_rule, self.brake_partner,
            self._pts, self._hdg, self._arc, self._nseg, self._route_len, self._route_main, self._route_left,
            self._route_entry, self._route_exit, self._pre_end, self._suf_start,
            float(ego_accel), cfg.dt, g.kp_psi, g.kp_lat, g.delta_max, g.v_eps,
            p.a_max, p.b_max_abs, p.time_gap_T, p.d0, p.lambda_exp, p.b_hard,
            cfg.prediction_horizon, cfg.prediction_step, cfg.prediction_margin,
        )
        self.tick += 1
        reached = math.hypot(self.x[0] - self.goal[0], self.y[0] - self.goal[1]) <= self.task.goal_radius
        return step_dist, bool(ego_hit), bool(reached)
