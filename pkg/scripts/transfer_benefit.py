"""Straight task: episodes needed to reach the scratch run's final level, with and without an expert."""

from _common import base_config, parser, root

from trldrive import experiments

if __name__ == "__main__":
    ap = parser(__doc__, 1000)
    ap.add_argument("--expert-episodes", type=int, default=2000)
    args = ap.parse_args()
    res = experiments.transfer_benefit(root(args), args.seeds, args.episodes, args.expert_episodes,
                                       base=base_config(args))
    for k, seed in enumerate(args.seeds):
        print(f"seed {seed}: level {res.level[k]:+.3f}  scratch {res.scratch_episodes[k]}  "
              f"transfer {res.transfer_episodes[k]}  first-100 loss {res.scratch_loss[k]:.4f} -> "
              f"{res.transfer_loss[k]:.4f}")
    print(f"transfer within {res.ratio:.0%} of scratch in {res.fast_seeds}/{len(args.seeds)} seeds")
