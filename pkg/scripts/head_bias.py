"""Accuracy drop of a full-data probe under low- and high-pass PCA projections.

The cutoff for each seed is the smallest c whose leading c eigenvectors
explain half of the training variance, so both projections keep equal power.
"""

import argparse

from bandinfo.bands import BandSpec, fit_basis
from bandinfo.core import explained_variance
from bandinfo.datasets import digits
from bandinfo.probes import band_sensitivity_sweep, split_dataset


def run(args):
    ds = digits()
    print("seed  c  full   low    high   drop_low  drop_high")
    for seed in range(args.seeds):
        train, _ = split_dataset(ds, 0.3, seed)
        spec = fit_basis("pca", train).spectrum
        c = next(i for i in range(1, spec.dim + 1) if explained_variance(spec, i) >= args.power)
        rep = band_sensitivity_sweep(ds, [BandSpec.full("pca"), BandSpec.low_pass("pca", c),
                                          BandSpec.high_pass("pca", c)], seed=seed)
        full, low, high = rep.values()
        print(f"{seed:4d} {c:2d}  {full:.3f}  {low:.3f}  {high:.3f}  {full - low:8.3f}  {full - high:9.3f}")


if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--power", type=float, default=0.5)
    run(p.parse_args())
