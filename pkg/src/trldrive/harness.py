"""Training, evaluation, transfer training, cross-task evaluation and reports.

All randomness is derived from ``RunConfig.seed`` (see :mod:`trldrive.seeding`),
so a config and seed fix every byte written.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from trldrive import neural, seeding
from trldrive.agent import QAgent, Transition
from trldrive.config import RunConfig, dump_config
from trldrive.env import IntersectionEnv, N_ACTIONS
from trldrive.road import Task
from trldrive.transfer import (
    ExpertDimensionError,
    ExpertHandle,
    load_expert,
    pinned_epsilon,
    select_action_with_transfer,
)

METRIC_COLUMNS = (
    "episode", "return", "discounted_return", "distance_m", "mean_speed_mps", "collision",
    "success", "mean_loss", "n_transfer", "n_explore", "n_exploit",
)
HEATMAP_COLUMNS = ("algo", "source_task", "target_task", "episodes", "success_rate")
MODEL_FILE = "model.trlq"
METRICS_FILE = "metrics.csv"
CONFIG_FILE = "config.txt"
REPORT_WINDOW = 100

ActionHook = Callable[[np.ndarray, int], int]


@dataclass
class EpisodeMetrics:
    episode: int
    ret: float
    discounted_return: float
    distance_m: float
    mean_speed_mps: float
    collision: bool
    success: bool
    mean_loss: float
    n_transfer: int = 0
    n_explore: int = 0
    n_exploit: int = 0

    def row(self) -> list[str]:
        return [
            str(self.episode), _fmt(self.ret), _fmt(self.discounted_return), _fmt(self.distance_m),
            _fmt(self.mean_speed_mps), str(int(self.collision)), str(int(self.success)),
            _fmt(self.mean_loss), str(self.n_transfer), str(self.n_explore), str(self.n_exploit),
        ]


@dataclass(frozen=True)
class EvalSummary:
    episodes: int
    success_rate: float
    collision_rate: float
    mean_return: float
    mean_distance: float


@dataclass
class RunResult:
    model_path: Path
    metrics_path: Path
    metrics: list
    agent: QAgent


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return repr(float(x))


def _task(name) -> Task:
    return Task.parse(name)


def write_metrics(path, metrics) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for m in metrics:
        w.writerow(m.row())
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_metrics(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} has no metric rows")
    return {c: np.array([float(r[c]) for r in rows]) for c in METRIC_COLUMNS}


# -------------------------------------------------------------- episodes

def run_episode(env: IntersectionEnv, env_seed: int, choose, gamma: float, learn=None):
    """Roll out one episode; ``choose(obs) -> (action, tag)``, ``learn(transition) -> loss | None``."""
    obs = env.reset(seed=env_seed)
    rewards, losses = [], []
    counts = {"transfer": 0, "exploration": 0, "exploitation": 0}
    distance = speed_sum = 0.0
    ticks = 0
    done = False
    info: dict = {}
    while not done:
        a, tag = choose(obs)
        counts[tag] += 1
        obs_next, r, done, info = env.step(a)
        rewards.append(r)
        distance += info["distance"]
        speed_sum += info["mean_speed"] * info["ticks"]
        ticks += info["ticks"]
        if learn is not None:
            loss = learn(Transition(obs, a, r, obs_next, done))
            if loss is not None:
                losses.append(loss)
        obs = obs_next
    collided = bool(info["collision"])
    return dict(
        ret=float(sum(rewards)),
        discounted_return=float(sum(r * gamma ** k for k, r in enumerate(rewards))),
        distance_m=distance,
        mean_speed_mps=speed_sum / ticks if ticks else 0.0,
        collision=collided,
        success=bool(info["reached_goal"]) and not collided,
        mean_loss=float(np.mean(losses)) if losses else float("nan"),
        n_transfer=counts["transfer"],
        n_explore=counts["exploration"],
        n_exploit=counts["exploitation"],
    )


def _learner(agent: QAgent, rng):
    def learn(t):
        agent.store(t)
        return agent.train_step(rng)
    return learn


def _train_loop(cfg: RunConfig, agent: QAgent, env: IntersectionEnv, expert: Optional[ExpertHandle],
                action_hook: Optional[ActionHook], stream: int = seeding.TRAIN_ENV):
    rng = np.random.default_rng(seeding.derive(cfg.seed, seeding.AGENT))
    learn = _learner(agent, rng)
    tcfg = cfg.transfer.resolve(cfg.planned_steps) if expert is not None else None
    step = [0]
    metrics = []
    for ep in range(cfg.episodes):
        eps = cfg.agent.epsilon(ep, cfg.episodes)

        def choose(obs):
            t = step[0]
            step[0] += 1
            if action_hook is not None:
                return action_hook(obs, t), "exploitation"
            if expert is None:
                u = rng.random()
                if u < eps:
                    return int(rng.integers(N_ACTIONS)), "exploration"
                return agent.greedy(obs), "exploitation"
            e = pinned_epsilon(eps, t, tcfg, cfg.agent.eps_start)
            return select_action_with_transfer(obs, agent, expert, e, t, rng, tcfg)

        out = run_episode(env, seeding.derive(cfg.seed, stream, ep), choose, cfg.agent.gamma, learn)
        metrics.append(EpisodeMetrics(episode=ep, **out))
    return metrics


def _finish(cfg: RunConfig, agent: QAgent, metrics, out_dir) -> RunResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / MODEL_FILE
    metrics_path = out / METRICS_FILE
    neural.save(agent.eval_net, model_path)
    write_metrics(metrics_path, metrics)
    (out / CONFIG_FILE).write_text(dump_config(cfg), encoding="utf-8")
    return RunResult(model_path, metrics_path, metrics, agent)


def make_agent(cfg: RunConfig, env: IntersectionEnv) -> QAgent:
    return QAgent(env.obs_dim, env.n_actions, cfg.agent, cfg.head, seeding.derive(cfg.seed, seeding.INIT))


def train(cfg: RunConfig, out_dir, action_hook: Optional[ActionHook] = None) -> RunResult:
    """Train from scratch; writes model.trlq, metrics.csv and config.txt into ``out_dir``.

    ``action_hook(obs, t)`` replaces action selection (a test hook).
    """
    env = IntersectionEnv(cfg.env, _task(cfg.task))
    agent = make_agent(cfg, env)
    metrics = _train_loop(cfg, agent, env, None, action_hook)
    return _finish(cfg, agent, metrics, out_dir)


def transfer_train(expert, cfg: RunConfig, out_dir) -> RunResult:
    """Train on ``cfg.task`` with actions drawn by the expert-guided three-rule policy."""
    env = IntersectionEnv(cfg.env, _task(cfg.task))
    if not isinstance(expert, ExpertHandle):
        expert = load_expert(expert, env.obs_dim, expected_head=cfg.head)
    agent = make_agent(cfg, env)
    metrics = _train_loop(cfg, agent, env, expert, None)
    return _finish(cfg, agent, metrics, out_dir)


def evaluate_params(params: neural.NetworkParams, task, episodes: int, seed: int, env_cfg,
                    stream: int = seeding.EVAL_ENV) -> EvalSummary:
    env = IntersectionEnv(env_cfg, _task(task))
    if params.input_dim != env.obs_dim:
        raise ExpertDimensionError(f"model takes {params.input_dim} inputs, environment observes {env.obs_dim}")
    choose = lambda obs: (int(np.argmax(neural.forward(params, obs))), "exploitation")
    rows = [run_episode(env, seeding.derive(seed, stream, k), choose, 1.0) for k in range(episodes)]
    return EvalSummary(
        episodes=episodes,
        success_rate=sum(r["success"] for r in rows) / episodes,
        collision_rate=sum(r["collision"] for r in rows) / episodes,
        mean_return=float(np.mean([r["ret"] for r in rows])),
        mean_distance=float(np.mean([r["distance_m"] for r in rows])),
    )


def evaluate(model_path, task, episodes: int = 10, seed: int = 0, env_cfg=None) -> EvalSummary:
    """Greedy rollouts of a saved model; no learning."""
    params = neural.load(model_path)
    return evaluate_params(params, task, episodes, seed, env_cfg or RunConfig().env)


# ----------------------------------------------------------- cross-eval

def cross_evaluate(models: dict, targets, episodes: int, seed: int, cfg: RunConfig, out_dir=None,
                   algo: Optional[str] = None) -> list[dict]:
    """Success rate of every (source model, target task) pair.

    ``frozen`` mode evaluates the source network as is; ``finetune`` first runs
    ``cfg.finetune_episodes`` of transfer training on the target with the
    source as expert and evaluates the resulting student.
    """
    algo = algo or cfg.algo
    rows = []
    for source, path in models.items():
        env = IntersectionEnv(cfg.env, _task(source))
        expert = load_expert(path, env.obs_dim, source_task=str(source))
        for target in targets:
            if cfg.mode == "frozen":
                params = expert.params
            else:
                ft = cfg.replace(task=_task(target).value, episodes=cfg.finetune_episodes,
                                 algo={"plain": "dql", "dueling": "dueling"}[expert.params.head])
                tenv = IntersectionEnv(ft.env, _task(target))
                agent = make_agent(ft, tenv)
                _train_loop(ft, agent, tenv, expert, None, stream=seeding.FINETUNE)
                params = agent.eval_net
            s = evaluate_params(params, target, episodes, seed, cfg.env)
            rows.append(dict(algo=algo, source_task=_task(source).value, target_task=_task(target).value,
                             episodes=episodes, success_rate=s.success_rate))
    if out_dir is not None:
        write_heatmap(Path(out_dir) / "heatmap.csv", rows)
    return rows


def write_heatmap(path, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEATMAP_COLUMNS)
    for r in rows:
        w.writerow([r["algo"], r["source_task"], r["target_task"], r["episodes"], _fmt(r["success_rate"])])
    path.write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------- report

def moving_average(x, window: int) -> np.ndarray:
    """Valid-mode mean over ``window``; a window longer than the series gives its overall mean."""
    x = np.asarray(x, dtype=float)
    if window < 1:
        raise ValueError("window must be positive")
    if len(x) == 0:
        return np.zeros(0)
    if window >= len(x):
        return np.array([x.mean()])
    c = np.concatenate([[0.0], np.cumsum(x)])
    return (c[window:] - c[:-window]) / window


def _curve(path, episodes, values, window, name):
    ma = moving_average(values, window)
    ends = episodes[len(episodes) - len(ma):] if len(ma) else episodes[:0]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", name])
    for e, v in zip(ends, ma):
        w.writerow([int(e), _fmt(v)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def emit_report(run_dir, window: int = REPORT_WINDOW) -> list[Path]:
    """Smoothed return, distance, speed and loss curves as CSV next to metrics.csv."""
    run_dir = Path(run_dir)
    metrics_path = run_dir / METRICS_FILE
    heatmap = run_dir / "heatmap.csv"
    written = []
    if not metrics_path.exists() and not heatmap.exists():
        raise FileNotFoundError(f"no {METRICS_FILE} or heatmap.csv in {run_dir}")
    if metrics_path.exists():
        m = read_metrics(metrics_path)
        ep = m["episode"]
        for col, fname in (("return", "return_curve.csv"), ("distance_m", "distance_curve.csv"),
                           ("mean_speed_mps", "speed_curve.csv")):
            _curve(run_dir / fname, ep, m[col], window, col)
            written.append(run_dir / fname)
        ok = np.isfinite(m["mean_loss"])
        _curve(run_dir / "loss_curve.csv", ep[ok], m["mean_loss"][ok], window, "mean_loss")
        written.append(run_dir / "loss_curve.csv")
    if heatmap.exists():
        with open(heatmap, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        targets = sorted({r["target_task"] for r in rows})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["algo", "source_task", *targets])
        keys = sorted({(r["algo"], r["source_task"]) for r in rows})
        for algo, src in keys:
            cell = {r["target_task"]: r["success_rate"] for r in rows if r["algo"] == algo and r["source_task"] == src}
            w.writerow([algo, src, *(cell.get(t, "") for t in targets)])
        (run_dir / "heatmap_matrix.csv").write_text(buf.getvalue(), encoding="utf-8")
        written.append(run_dir / "heatmap_matrix.csv")
    return written


def first_episode_reaching(returns, level: float, window: int = REPORT_WINDOW) -> Optional[int]:
    """1-based episode count at which the window-mean return first reaches ``level``."""
    ma = moving_average(returns, window)
    if len(returns) <= window:
        return len(returns) if ma[0] >= level else None
    hit = np.flatnonzero(ma >= level)
    return int(hit[0] + window) if len(hit) else None


__all__ = [
    "METRIC_COLUMNS", "HEATMAP_COLUMNS", "EpisodeMetrics", "EvalSummary", "RunResult", "train",
    "transfer_train", "evaluate", "evaluate_params", "cross_evaluate", "emit_report", "moving_average",
    "read_metrics", "write_metrics", "first_episode_reaching", "run_episode",
]
