#!/usr/bin/env python3
"""Write a small MNIST subset in IDX format for offline use.

Sources the 5000-image MNIST sample shipped inside the `mlxtend` wheel
(500 images per digit), splits it per class into train/t10k and writes the
four canonical files under <data_root>/mnist/.

    python3 tools/make_mnist_subset.py --data-root data [--test-per-class 100]

Only needed when the full MNIST files cannot be downloaded.
"""
import argparse
import glob
import gzip
import os
import random
import struct
import subprocess
import sys
import tempfile
import zipfile

CSV_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def fetch_wheel(workdir):
    subprocess.check_call(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "mlxtend", "-d", workdir]
    )
    wheels = glob.glob(os.path.join(workdir, "mlxtend-*.whl"))
    if not wheels:
        sys.exit("mlxtend wheel not found after download")
    return wheels[0]


def write_images(path, rows):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for pixels in rows:
            f.write(bytes(pixels))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data-root", default="data")
    ap.add_argument("--wheel", help="path to an already downloaded mlxtend wheel")
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or fetch_wheel(tmp)
        raw = gzip.decompress(zipfile.ZipFile(wheel).read(CSV_MEMBER)).decode()

    by_class = {c: [] for c in range(10)}
    for line in raw.splitlines():
        fields = [int(float(v)) for v in line.split(",")]
        by_class[fields[-1]].append(fields[:-1])

    rng = random.Random(args.seed)
    train, test = [], []
    for c in range(10):
        items = by_class[c]
        rng.shuffle(items)
        test += [(px, c) for px in items[: args.test_per_class]]
        train += [(px, c) for px in items[args.test_per_class :]]
    rng.shuffle(train)
    rng.shuffle(test)

    out = os.path.join(args.data_root, "mnist")
    os.makedirs(out, exist_ok=True)
    for split, items in (("train", train), ("t10k", test)):
        write_images(os.path.join(out, f"{split}-images-idx3-ubyte"), [px for px, _ in items])
        write_labels(os.path.join(out, f"{split}-labels-idx1-ubyte"), [c for _, c in items])
    print(f"wrote {len(train)} train / {len(test)} test images to {out}")


if __name__ == "__main__":
    main()
