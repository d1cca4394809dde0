"""Discrimination accuracy of sliding windows of SFA features, slow to fast."""

import argparse

import numpy as np

from bandinfo.audio import discriminate_pair, latent_pair, sfa_fit


def run(args):
    a, b = latent_pair(args.frames, args.sources, seed=args.seed)
    f = sfa_fit(np.hstack([a, b]))
    fa, fb = f.transform(a), f.transform(b)
    print("start  slowness  mean   95% CI")
    for start in range(0, args.sources - args.width + 1):
        r = discriminate_pair(fa, fb, args.width, seed=args.seed, start=start, runs=args.runs)
        print(f"{start:5d}  {f.eigenvalues[start]:.4f}  {r.mean:.3f}  [{r.low:.3f}, {r.high:.3f}]")


if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--frames", type=int, default=2000)
    p.add_argument("--sources", type=int, default=10)
    p.add_argument("--width", type=int, default=5)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    run(p.parse_args())
