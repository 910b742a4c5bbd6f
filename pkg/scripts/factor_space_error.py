"""Projection distance between estimated and true factor spaces.

Compares the estimator with PCA on the true residual matrix (true beta),
which bounds what any coefficient estimate can achieve.
"""

import argparse

import numpy as np

from vcpanel.estimator import FitConfig, fit
from vcpanel.simulate import DgpConfig, generate


def proj_dist(f_hat, f0):
    def proj(f):
        return f @ np.linalg.pinv(f.T @ f) @ f.T
    p0 = proj(f0)
    return np.linalg.norm(proj(f_hat) - p0) / np.linalg.norm(p0)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="40,80,120")
    ap.add_argument("--reps", type=int, default=20)
    args = ap.parse_args(argv)
    for n in (int(s) for s in args.sizes.split(",")):
        est, orc = [], []
        for k in range(args.reps):
            data, truth = generate(DgpConfig(n, n, seed=k))
            res = fit(data, 3, 0.0, FitConfig(seed=k))
            est.append(proj_dist(res.factors.f, truth.f0))
            w = truth.gamma0 @ truth.f0.T + truth.eps
            vecs = np.linalg.eigh(w.T @ w)[1][:, -3:]
            orc.append(proj_dist(vecs, truth.f0))
        print(f"N=T={n}: estimator {np.mean(est):.3f}, true-beta PCA {np.mean(orc):.3f}")


if __name__ == "__main__":
    main()
