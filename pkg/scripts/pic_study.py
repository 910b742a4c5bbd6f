"""Distribution of the PIC-selected factor count on the LD design."""

import argparse
from collections import Counter

from vcpanel.estimator import FitConfig
from vcpanel.selection import PipelineConfig, select_num_factors
from vcpanel.simulate import DgpConfig, generate


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=80)
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--r-max", type=int, default=6)
    args = ap.parse_args(argv)
    picks = Counter()
    for k in range(args.reps):
        data, _ = generate(DgpConfig(args.n, args.n, seed=k))
        r_star, table, _ = select_num_factors(data, args.r_max,
                                              PipelineConfig(fit=FitConfig(seed=k)))
        picks[r_star] += 1
        print(k, r_star, [round(row["pic"], 4) for row in table], flush=True)
    print("r* counts:", dict(sorted(picks.items())))


if __name__ == "__main__":
    main()
