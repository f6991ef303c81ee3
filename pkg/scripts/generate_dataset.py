#!/usr/bin/env python3
"""Write a reproducible synthetic classification dataset in LIBSVM format.

Example:
    python3 scripts/generate_dataset.py --rows 2000 --cols 100 --nnz-per-row 10 \
        --seed 42 --label-noise 0.05 --out data/synthetic.svm
"""

import argparse
import os
import sys

from casgd.datagen import synthetic_dataset
from casgd.sparse import serialize_libsvm


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, required=True)
    parser.add_argument("--cols", type=int, required=True)
    parser.add_argument("--nnz-per-row", type=int, required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--values", choices=["gaussian", "binary"], default="gaussian")
    parser.add_argument("--label-noise", type=float, default=0.0)
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    dataset = synthetic_dataset(
        args.rows,
        args.cols,
        args.nnz_per_row,
        seed=args.seed,
        feature_values=args.values,
        label_noise=args.label_noise,
    )
    directory = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(directory, exist_ok=True)
    with open(args.out, "w") as fh:
        fh.write(serialize_libsvm(dataset))
    print(f"wrote {dataset.num_points} x {dataset.num_features} dataset "
          f"({dataset.nnz} nonzeros, density {dataset.density:.4f}) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
