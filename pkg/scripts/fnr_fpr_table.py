"""FNR/FPR table for the LD and HD designs over several N=T sizes."""

import argparse
import csv
import os
import sys
import time

from vcpanel.simulate import DgpConfig, monte_carlo


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="40,80,120")
    ap.add_argument("--cases", default="LD,HD")
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default="fnr_fpr_table.csv")
    args = ap.parse_args(argv)
    rows = []
    for case in args.cases.split(","):
        for n in (int(s) for s in args.sizes.split(",")):
            t0 = time.time()
            rep = monte_carlo(DgpConfig(n, n, case=case, seed=args.seed), args.reps,
                              threads=args.threads)
            rows.append([case, n, n, args.reps, f"{rep.fnr:.2f}", f"{rep.fpr:.2f}",
                         rep.n_nonconverged])
            print(f"{case} N=T={n}: FNR {rep.fnr:.2f}%  FPR {rep.fpr:.2f}%  "
                  f"({time.time() - t0:.0f}s)", flush=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "N", "T", "reps", "FNR", "FPR", "nonconverged"])
        w.writerows(rows)


if __name__ == "__main__":
    sys.exit(main())
