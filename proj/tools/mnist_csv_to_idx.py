#!/usr/bin/env python3
"""Convert a CSV of MNIST rows (784 pixel columns + label column) to IDX files.

The 5,000-image subset shipped with mlxtend (mlxtend/data/data/mnist_5k.csv.gz)
is the expected input; any CSV with the same layout works.
"""
import argparse
import gzip
import struct

import numpy as np


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("--out-images", required=True)
    ap.add_argument("--out-labels", required=True)
    args = ap.parse_args()

    opener = gzip.open if args.csv.endswith(".gz") else open
    with opener(args.csv, "rt") as f:
        table = np.loadtxt(f, delimiter=",")
    pixels = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    n = pixels.shape[0]
    side = int(round(pixels.shape[1] ** 0.5))
    assert side * side == pixels.shape[1]

    with open(args.out_images, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, side, side))
        f.write(pixels.tobytes())
    with open(args.out_labels, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.tobytes())


if __name__ == "__main__":
    main()
