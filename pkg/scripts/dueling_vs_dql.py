"""Left turn: final-500-episode mean return of dueling DQL and DQL on identical seeds."""

from _common import base_config, parser, root

from trldrive import experiments

if __name__ == "__main__":
    args = parser(__doc__, 2000).parse_args()
    res = experiments.dueling_vs_dql(root(args), args.seeds, args.episodes, base=base_config(args))
    for seed, a, b in zip(args.seeds, res.dueling, res.dql):
        print(f"seed {seed}: dueling {a:+.3f}  dql {b:+.3f}")
    print(f"dueling >= dql in {res.wins}/{len(args.seeds)} seeds")
