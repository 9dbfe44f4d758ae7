"""Command line entry point: ``python -m trldrive <subcommand> ...``.

Settings are layered: built-in defaults, then ``--config`` (key=value file),
then explicit flags. Exit codes: 0 ok, 2 config error, 3 I/O error,
4 model-format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

from trldrive import harness
from trldrive.config import ALGOS, ConfigError, RunConfig, load_config
from trldrive.neural import ModelFormatError
from trldrive.road import Task
from trldrive.transfer import ExpertDimensionError

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_FORMAT = 0, 2, 3, 4
TASKS = tuple(t.value for t in Task)


def _add_common(p: argparse.ArgumentParser, task=True, algo=True, episodes=True):
    if task:
        p.add_argument("--task", choices=TASKS)
    if algo:
        p.add_argument("--algo", choices=sorted(ALGOS))
    if episodes:
        p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--out", help="output directory")


def _add_transfer(p: argparse.ArgumentParser):
    p.add_argument("--beta0", type=float, help="initial transfer probability")
    p.add_argument("--ttran", type=float, help="transfer period in decision steps")
    p.add_argument("--texp", type=float, help="initial exploration period in decision steps")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trldrive", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a DQL or dueling DQL agent from scratch")
    _add_common(p)

    p = sub.add_parser("evaluate", help="greedy evaluation of a saved model")
    _add_common(p, algo=False)
    p.add_argument("--model", required=True)

    p = sub.add_parser("transfer-train", help="train with an expert guiding action selection")
    _add_common(p)
    p.add_argument("--expert", required=True)
    _add_transfer(p)

    p = sub.add_parser("cross-eval", help="success rate of every source model on every target task")
    _add_common(p, task=False)
    p.add_argument("--expert", action="append", required=True, metavar="SOURCE=PATH",
                   help="source task and model file; repeat per source")
    p.add_argument("--targets", default=",".join(TASKS), help="comma-separated target tasks")
    p.add_argument("--mode", choices=("frozen", "finetune"))
    _add_transfer(p)

    p = sub.add_parser("report", help="write smoothed curves and the heatmap matrix as CSV")
    p.add_argument("run_dir", nargs="?")
    p.add_argument("--out", help="run directory (alternative to the positional argument)")
    p.add_argument("--window", type=int, default=harness.REPORT_WINDOW)
    return ap


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    changes = {}
    for name in ("task", "algo", "episodes", "seed", "mode"):
        val = getattr(args, name, None)
        if val is not None:
            changes[name] = val
    if changes:
        cfg = cfg.replace(**changes)
    tr = {}
    for flag, field in (("beta0", "beta0"), ("ttran", "t_tran"), ("texp", "t_exp")):
        val = getattr(args, flag, None)
        if val is not None:
            tr[field] = val
    if tr:
        cfg = cfg.replace(transfer=replace(cfg.transfer, **tr))
    # validate the transfer periods up front so bad flags fail as config errors
    try:
        cfg.transfer.resolve(cfg.planned_steps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _out_dir(args, cfg: RunConfig, kind: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path("runs") / f"{kind}_{cfg.task}_{cfg.algo}_s{cfg.seed}"


def _parse_sources(items) -> dict[str, str]:
    models = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--expert for cross-eval takes SOURCE=PATH, got {item!r}")
        src, path = item.split("=", 1)
        try:
            models[Task.parse(src.strip()).value] = path.strip()
        except ValueError:
            raise ConfigError(f"unknown source task {src!r}") from None
    return models


def _summary_line(res: harness.RunResult) -> dict:
    m = res.metrics
    tail = m[-min(len(m), harness.REPORT_WINDOW):]
    return dict(
        model=str(res.model_path), metrics=str(res.metrics_path), episodes=len(m),
        final_mean_return=sum(x.ret for x in tail) / len(tail),
        final_success_rate=sum(x.success for x in tail) / len(tail),
    )


def run(args) -> int:
    if args.command == "report":
        target = args.run_dir or args.out
        if not target:
            raise ConfigError("report needs a run directory")
        for path in harness.emit_report(target, args.window):
            print(path)
        return EXIT_OK

    cfg = resolve_config(args)
    if args.command == "train":
        res = harness.train(cfg, _out_dir(args, cfg, "train"))
        print(json.dumps(_summary_line(res)))
    elif args.command == "transfer-train":
        res = harness.transfer_train(args.expert, cfg, _out_dir(args, cfg, "transfer"))
        print(json.dumps(_summary_line(res)))
    elif args.command == "evaluate":
        episodes = args.episodes if args.episodes is not None else cfg.eval_episodes
        s = harness.evaluate(args.model, cfg.task, episodes, cfg.seed, cfg.env)
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / "evaluation.json").write_text(json.dumps(asdict(s), sort_keys=True) + "\n")
        print(json.dumps(asdict(s), sort_keys=True))
    elif args.command == "cross-eval":
        models = _parse_sources(args.expert)
        try:
            targets = [Task.parse(t.strip()).value for t in args.targets.split(",") if t.strip()]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        episodes = args.episodes if args.episodes is not None else cfg.eval_episodes
        out = Path(args.out) if args.out else Path("runs") / f"cross_{cfg.algo}_s{cfg.seed}"
        rows = harness.cross_evaluate(models, targets, episodes, cfg.seed, cfg, out)
        for r in rows:
            print(json.dumps(r, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelFormatError, ExpertDimensionError) as exc:
        print(f"model format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:  # includes an unreadable expert file
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


__all__ = ["main", "build_parser", "resolve_config", "EXIT_OK", "EXIT_CONFIG", "EXIT_IO", "EXIT_FORMAT"]
