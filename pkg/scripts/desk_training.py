"""Dueling DQL on the right turn: greedy success rate per seed and training time."""

from _common import base_config, parser, root

from trldrive import experiments

if __name__ == "__main__":
    ap = parser(__doc__, 2000)
    ap.add_argument("--eval-episodes", type=int, default=experiments.EVAL_EPISODES)
    args = ap.parse_args()
    res = experiments.desk_training(root(args), args.seeds, args.episodes, args.eval_episodes, base_config(args))
    for seed, rate, sec in zip(args.seeds, res.success, res.seconds):
        print(f"seed {seed}: success {rate:.2f}  training {sec:.0f} s")
    print(f"mean success {res.mean_success:.3f}  total training {sum(res.seconds) / 60:.1f} min")
