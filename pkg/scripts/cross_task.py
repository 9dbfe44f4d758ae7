"""Frozen success rate of each source-task model on each target task, per algorithm."""

from _common import base_config, parser, root

from trldrive import experiments

if __name__ == "__main__":
    ap = parser(__doc__, 2000)
    ap.add_argument("--eval-episodes", type=int, default=experiments.EVAL_EPISODES)
    args = ap.parse_args()
    res = experiments.diagonal_dominance(root(args), args.seeds, args.episodes, args.eval_episodes,
                                         base=base_config(args))
    for algo, table in res.rates.items():
        print(algo)
        targets = list(next(iter(table.values())))
        print("  source \\ target " + " ".join(f"{t:>9}" for t in targets))
        for src, row in table.items():
            print(f"  {src:16} " + " ".join(f"{row[t]:9.2f}" for t in targets))
    bad = res.violations()
    print("diagonal dominant" if not bad else f"violations: {bad}")
