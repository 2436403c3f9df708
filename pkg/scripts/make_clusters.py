#!/usr/bin/env python3
"""Generate a Gaussian-cluster CSV for embedding and round-trip demos."""

from __future__ import annotations

import argparse

import numpy as np


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--clusters", type=int, default=4)
    ap.add_argument("--dims", type=int, default=3)
    ap.add_argument("--spread", type=float, default=1.0)
    ap.add_argument("--separation", type=float, default=6.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    centers = rng.normal(scale=args.separation, size=(args.clusters, args.dims))
    labels = rng.integers(0, args.clusters, size=args.n)
    X = centers[labels] + rng.normal(scale=args.spread, size=(args.n, args.dims))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"x{j}" for j in range(args.dims)) + ",cluster\n")
        for row, lab in zip(X, labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",c{lab}\n")
    print(f"wrote {args.n} rows to {args.out}")


if __name__ == "__main__":
    main()
