"""Per-band probe accuracy on the digits for each basis and probe kind.

Writes one long-format CSV with columns probe, band, accuracy, power_fraction.
"""

import argparse
import csv
import sys

from bandinfo.bands import Basis, default_partition
from bandinfo.datasets import digits
from bandinfo.probes import ProbeConfig, band_predictivity_sweep


def run(args, fh):
    ds = digits()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["basis", "probe", "band", "accuracy", "power_fraction"])
    for kind in args.bases:
        stub = Basis(kind, ds.image_shape)
        bands = default_partition(stub, min(args.n_bands, stub.num_indices()))
        for probe in args.probes:
            rep = band_predictivity_sweep(ds, bands, ProbeConfig(kind=probe), seed=args.seed)
            for r in rep.rows:
                w.writerow([kind, probe, r.band, f"{r.value:.4f}", f"{r.power_fraction:.4f}"])


if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--bases", nargs="+", default=["pca", "fourier", "wavelet"])
    p.add_argument("--probes", nargs="+", default=["logistic", "mlp"])
    p.add_argument("--n-bands", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    args = p.parse_args()
    if args.out == "-":
        run(args, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            run(args, fh)
