import argparse
from pathlib import Path

from trldrive.config import load_config


def parser(description: str, episodes: int) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--root", default="runs/acceptance", help="run cache directory")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--episodes", type=int, default=episodes)
    ap.add_argument("--config", help="key=value settings applied to every run")
    return ap


def base_config(args):
    return load_config(args.config) if args.config else None


def root(args) -> Path:
    return Path(args.root)
