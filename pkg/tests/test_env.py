import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trldrive.collision import rect_overlap
from trldrive.env import EnvConfig, EnvError, EnvUsageError, IntersectionEnv, compute_reward, observe_arrays
from trldrive.road import Task

EMPTY = EnvConfig(n_vehicles=0)


def rollout(env, seed, policy):
    obs = [env.reset(seed=seed)]
    rewards, infos = [], []
    done = False
    while not done:
        o, r, done, info = env.step(policy(len(rewards)))
        obs.append(o)
        rewards.append(r)
        infos.append(info)
    return np.array(obs), rewards, infos


def test_observation_length():
    env = IntersectionEnv(EnvConfig(), "right")
    assert env.reset(seed=0).shape == (64,)
    assert env.obs_dim == 64


def test_reset_deterministic():
    env = IntersectionEnv(EnvConfig(), "left")
    a = env.reset(seed=7)
    b = IntersectionEnv(EnvConfig(), "left").reset(seed=7)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, env.reset(seed=8))


def test_episode_deterministic():
    policy = lambda k: (k * 7) % 3
    o1, r1, _ = rollout(IntersectionEnv(EnvConfig(), "straight"), 3, policy)
    o2, r2, _ = rollout(IntersectionEnv(EnvConfig(), "straight"), 3, policy)
    assert np.array_equal(o1, o2) and r1 == r2


def test_empty_world_zero_blocks():
    obs = IntersectionEnv(EMPTY, "right").reset(seed=0)
    assert obs.shape == (64,)
    assert np.all(obs[4:] == 0.0)
    assert obs[1] != 0.0  # ego block filled


def test_accelerate_one_second_reaches_5():
    env = IntersectionEnv(EMPTY, "straight")
    env.reset(seed=0)
    env.step(2)
    assert env.v[0] == pytest.approx(5.0, abs=1e-12)


def test_timeout_after_300_ticks():
    env = IntersectionEnv(EMPTY, "left")
    _, rewards, infos = rollout(env, 0, lambda k: 0)
    assert len(rewards) == 15
    assert env.tick == 300 and infos[-1]["elapsed"] == pytest.approx(15.0)
    assert not infos[-1]["reached_goal"] and not infos[-1]["collision"]


@pytest.mark.parametrize("task", list(Task))
def test_free_road_full_throttle_reaches_goal(task):
    env = IntersectionEnv(EMPTY, task)
    _, rewards, infos = rollout(env, 0, lambda k: 2)
    assert infos[-1]["reached_goal"] and not any(i["collision"] for i in infos)
    assert rewards[-1] == 1.0


def test_collision_terminates_with_penalty():
    env = IntersectionEnv(EnvConfig(n_vehicles=1), "straight")
    env.reset(seed=0)
    # a wreck parked on the ego lane just ahead
    env._place(1, env.ego_route, env.s[0] + 8.0, 0.0)
    env.crashed[1] = True
    done = False
    while not done:
        _, r, done, info = env.step(2)
    assert info["collision"] and r in (-5.0, -4.0)
    with pytest.raises(EnvUsageError):
        env.step(0)


def test_step_before_reset_and_bad_action():
    env = IntersectionEnv(EMPTY, "right")
    with pytest.raises(EnvUsageError):
        env.step(0)
    env.reset(seed=0)
    with pytest.raises(EnvUsageError):
        env.step(3)


def test_reward_table():
    assert compute_reward(True, False, False) == 1.0
    assert compute_reward(True, True, False) == 1.0
    assert compute_reward(False, True, False) == 1.0
    assert compute_reward(False, False, True) == -5.0
    assert compute_reward(False, True, True) == -4.0
    assert compute_reward(False, False, False) == 0.0


def test_highest_speed_flag():
    env = IntersectionEnv(EMPTY, "straight")
    _, rewards, infos = rollout(env, 0, lambda k: 2)
    fast = [i["highest_speed"] for i in infos]
    assert fast[0] is False and any(fast)
    assert all(r in (0.0, 1.0) for r in rewards)


def test_observe_ordering_and_scaling():
    x = np.array([0.0, 30.0, 10.0, 100.0])
    y = np.zeros(4)
    vx = np.array([0.0, 2.0, 4.0, 0.0])
    active = np.array([True, True, True, False])
    obs = observe_arrays(x, y, vx, np.zeros(4), active, 3, 100.0, 20.0)
    assert np.array_equal(obs[:4], [0, 0, 0, 0])
    assert np.array_equal(obs[4:8], [0.1, 0, 0.2, 0])
    assert np.array_equal(obs[8:12], [0.3, 0, 0.1, 0])
    assert np.all(obs[12:] == 0)  # inactive slot padded
    obs = observe_arrays(np.array([100.0]), np.zeros(1), np.zeros(1), np.zeros(1), np.ones(1, bool), 0, 100.0, 20.0)
    assert obs[0] == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_spawn_respects_distributions(seed):
    cfg = EnvConfig()
    env = IntersectionEnv(cfg, "right")
    env.reset(seed=seed)
    L = cfg.layout.approach_length
    for k in range(1, len(env.x)):
        offset = L - env.s[k]
        assert cfg.spawn_offset_min - 1e-6 <= offset <= cfg.spawn_offset_max + 1e-6
        assert cfg.spawn_speed_min <= env.v[k] <= cfg.spawn_speed_max
        for j in range(k):
            assert not rect_overlap(env.x[k], env.y[k], env.psi[k], 2.5, 1.0, env.x[j], env.y[j], env.psi[j], 2.5, 1.0)
    assert env.v[0] == 0.0
    assert env.s[0] == pytest.approx(env.task.start_s(cfg.layout))


def test_crowded_layout_fails():
    cfg = EnvConfig(n_vehicles=200, n_observed=15, spawn_offset_min=15.0, spawn_offset_max=20.0, max_spawn_attempts=50)
    with pytest.raises(EnvError):
        IntersectionEnv(cfg, "right").reset(seed=0)


def test_config_validation():
    with pytest.raises(ValueError):
        EnvConfig(sim_hz=0)
    with pytest.raises(ValueError):
        EnvConfig(decision_period=0.33)
    with pytest.raises(ValueError):
        EnvConfig(spawn_offset_max=150.0)
    assert EnvConfig().decisions_per_episode == 15


@pytest.mark.parametrize("task", list(Task))
def test_surrounding_vehicles_never_collide(task):
    env = IntersectionEnv(EnvConfig(), task)
    rng = np.random.default_rng(1)
    crashes = 0
    for ep in range(40):
        env.reset(seed=10_000 + ep)
        done = False
        while not done:
            done = env.step(int(rng.integers(3))).done
        crashes += int(env.crashed[1:].sum())
    assert crashes == 0


def test_reward_range_and_absorbing_done():
    env = IntersectionEnv(EnvConfig(), "left")
    rng = np.random.default_rng(0)
    for ep in range(10):
        _, rewards, infos = rollout(env, ep, lambda k: int(rng.integers(3)))
        assert set(rewards) <= {-5.0, -4.0, 0.0, 1.0}
        assert env.done and len(rewards) <= 15
        last = infos[-1]
        assert last["collision"] or last["reached_goal"] or math.isclose(last["elapsed"], 15.0)
