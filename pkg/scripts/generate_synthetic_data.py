from __future__ import annotations

import argparse
from pathlib import Path

from resample_kernel.io_utils import write_dataset_csv
from resample_kernel.sample_data import generate_blobs


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--c", type=int, default=3)
    parser.add_argument("--per-cluster", type=int, default=60)
    parser.add_argument("--d", type=int, default=2)
    parser.add_argument("--separation", type=float, default=10.0)
    parser.add_argument("--noise-sd", type=float, default=0.5)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--out", default="data/blobs.csv")
    args = parser.parse_args()

    ds = generate_blobs(args.c, args.per_cluster, args.d, args.separation, args.noise_sd, args.seed)
    write_dataset_csv(ds, Path(args.out))
    print(f"Synthetic blobs (n={ds.n}, d={ds.d}, c={args.c}) written to {args.out}")


if __name__ == "__main__":
    main()
