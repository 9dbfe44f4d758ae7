"""Desk-scale experiment protocols behind the directional acceptance checks.

Each protocol trains a handful of seeded runs under ``root`` and returns a
small result record. Runs are cached: a directory whose config.txt and code
fingerprint match the request and which holds a model and metrics file is
reused, so the scripts and the acceptance suite can share one set of runs.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from trldrive import harness
from trldrive.config import RunConfig, dump_config

SEEDS = (0, 1, 2)
ALGOS = ("dueling", "dql")
TASKS = ("left", "straight", "right")
EVAL_EPISODES = 100
EXPERT_SEED = 100
FINGERPRINT_FILE = "code.sha256"
ELAPSED_FILE = "elapsed_s.txt"
# modules whose behaviour determines a run's outputs
_RUN_MODULES = ("agent", "collision", "config", "env", "harness", "neural", "road", "seeding", "transfer",
                "vehicle", "world")


def code_fingerprint() -> str:
    h = hashlib.sha256()
    pkg = Path(__file__).parent
    for name in _RUN_MODULES:
        h.update((pkg / f"{name}.py").read_bytes())
    return h.hexdigest()


def _complete(out: Path, cfg: RunConfig) -> bool:
    try:
        same = (out / harness.CONFIG_FILE).read_text(encoding="utf-8") == dump_config(cfg)
        same = same and (out / FINGERPRINT_FILE).read_text(encoding="utf-8") == code_fingerprint()
    except OSError:
        return False
    return same and (out / harness.MODEL_FILE).exists() and (out / harness.METRICS_FILE).exists()


def run_cached(cfg: RunConfig, out, expert=None) -> Path:
    """Train (or transfer-train from ``expert``) into ``out`` unless already done."""
    out = Path(out)
    if not _complete(out, cfg):
        start = time.perf_counter()
        if expert is None:
            harness.train(cfg, out)
        else:
            harness.transfer_train(expert, cfg, out)
        (out / ELAPSED_FILE).write_text(f"{time.perf_counter() - start:.3f}\n", encoding="utf-8")
        (out / FINGERPRINT_FILE).write_text(code_fingerprint(), encoding="utf-8")
    return out


def elapsed(out) -> float:
    """Wall-clock training seconds recorded when the run was made."""
    return float((Path(out) / ELAPSED_FILE).read_text(encoding="utf-8"))


def run_dir(root, kind: str, cfg: RunConfig) -> Path:
    return Path(root) / f"{kind}_{cfg.task}_{cfg.algo}_e{cfg.episodes}_s{cfg.seed}"


def scratch(root, task: str, algo: str, seed: int, episodes: int, base: Optional[RunConfig] = None) -> Path:
    cfg = (base or RunConfig()).replace(task=task, algo=algo, seed=seed, episodes=episodes)
    return run_cached(cfg, run_dir(root, "train", cfg))


def returns(path) -> np.ndarray:
    return harness.read_metrics(Path(path) / harness.METRICS_FILE)["return"]


@dataclass
class DeskTraining:
    success: list[float]
    seconds: list[float]

    @property
    def mean_success(self) -> float:
        return float(np.mean(self.success))


def desk_training(root, seeds=SEEDS, episodes: int = 2000, eval_episodes: int = EVAL_EPISODES,
                  base: Optional[RunConfig] = None) -> DeskTraining:
    """Dueling DQL on the right turn; greedy success rate per seed."""
    env_cfg = (base or RunConfig()).env
    out = DeskTraining([], [])
    for seed in seeds:
        d = scratch(root, "right", "dueling", seed, episodes, base)
        out.success.append(harness.evaluate(d / harness.MODEL_FILE, "right", eval_episodes, seed, env_cfg).success_rate)
        out.seconds.append(elapsed(d))
    return out


@dataclass
class DuelingVsDql:
    dueling: list[float]
    dql: list[float]

    @property
    def wins(self) -> int:
        return sum(a >= b for a, b in zip(self.dueling, self.dql))


def dueling_vs_dql(root, seeds=SEEDS, episodes: int = 2000, tail: int = 500,
                   base: Optional[RunConfig] = None) -> DuelingVsDql:
    """Final-``tail``-episode mean return on the left turn for both algorithms."""
    res = {a: [float(returns(scratch(root, "left", a, s, episodes, base))[-tail:].mean()) for s in seeds]
           for a in ALGOS}
    return DuelingVsDql(res["dueling"], res["dql"])


@dataclass
class TransferBenefit:
    level: list[float]
    scratch_episodes: list[Optional[int]]
    transfer_episodes: list[Optional[int]]
    scratch_loss: list[float]
    transfer_loss: list[float]
    ratio: float

    @property
    def fast(self) -> list[bool]:
        out = []
        for s, t in zip(self.scratch_episodes, self.transfer_episodes):
            out.append(s is not None and t is not None and t <= self.ratio * s)
        return out

    @property
    def fast_seeds(self) -> int:
        return sum(self.fast)

    @property
    def lower_loss_seeds(self) -> int:
        return sum(t < s for s, t in zip(self.scratch_loss, self.transfer_loss))


def transfer_benefit(root, seeds=SEEDS, episodes: int = 1000, expert_episodes: int = 2000,
                     tail: int = 500, window: int = harness.REPORT_WINDOW, ratio: float = 0.6,
                     base: Optional[RunConfig] = None) -> TransferBenefit:
    """Scratch vs expert-guided training on the straight task.

    The level is the scratch run's mean return over its last ``tail`` episodes;
    each run's count is the first episode at which its ``window``-episode mean
    return reaches that level.
    """
    base = base or RunConfig()
    expert = scratch(root, "straight", "dueling", EXPERT_SEED, expert_episodes, base) / harness.MODEL_FILE
    out = TransferBenefit([], [], [], [], [], ratio)
    for seed in seeds:
        cfg = base.replace(task="straight", algo="dueling", seed=seed, episodes=episodes)
        s_dir = run_cached(cfg, run_dir(root, "train", cfg))
        t_dir = run_cached(cfg, run_dir(root, "transfer", cfg), expert=expert)
        s_m = harness.read_metrics(s_dir / harness.METRICS_FILE)
        t_m = harness.read_metrics(t_dir / harness.METRICS_FILE)
        level = float(s_m["return"][-tail:].mean())
        out.level.append(level)
        out.scratch_episodes.append(harness.first_episode_reaching(s_m["return"], level, window))
        out.transfer_episodes.append(harness.first_episode_reaching(t_m["return"], level, window))
        out.scratch_loss.append(float(np.nanmean(s_m["mean_loss"][:100])))
        out.transfer_loss.append(float(np.nanmean(t_m["mean_loss"][:100])))
    return out


@dataclass
class DiagonalDominance:
    # rates[algo][source][target], seed-averaged
    rates: dict = field(default_factory=dict)

    def violations(self) -> list[tuple[str, str, str]]:
        bad = []
        for algo, table in self.rates.items():
            for src, row in table.items():
                bad += [(algo, src, t) for t, r in row.items() if t != src and r > row[src]]
        return bad


def diagonal_dominance(root, seeds=SEEDS, episodes: int = 2000, eval_episodes: int = EVAL_EPISODES,
                       algos=ALGOS, sources=TASKS, targets=TASKS,
                       base: Optional[RunConfig] = None) -> DiagonalDominance:
    """Frozen cross-task success rates of scratch-trained source models."""
    base = base or RunConfig()
    out = DiagonalDominance()
    for algo in algos:
        acc = {s: {t: [] for t in targets} for s in sources}
        for seed in seeds:
            models = {s: scratch(root, s, algo, seed, episodes, base) / harness.MODEL_FILE for s in sources}
            cfg = base.replace(algo=algo, seed=seed, mode="frozen")
            for r in harness.cross_evaluate(models, targets, eval_episodes, seed, cfg):
                acc[r["source_task"]][r["target_task"]].append(r["success_rate"])
        out.rates[algo] = {s: {t: float(np.mean(v)) for t, v in row.items()} for s, row in acc.items()}
    return out


__all__ = [
    "code_fingerprint", "elapsed", "run_cached", "run_dir", "scratch", "returns", "desk_training", "dueling_vs_dql",
    "transfer_benefit",
    "diagonal_dominance", "DeskTraining", "DuelingVsDql", "TransferBenefit", "DiagonalDominance",
]
