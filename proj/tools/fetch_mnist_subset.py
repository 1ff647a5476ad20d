#!/usr/bin/env python3
# Copyright (c) 2026, the cagem authors
# SPDX-License-Identifier: Apache-2.0
"""Build a 15k-digit MNIST subset in IDX format from package-manager mirrors.

Sources:
  npm  "mnist"    10,000 digits as JSON (one file per class)
  pip  "mlxtend"   5,000 digits in mlxtend/data/data/mnist_5k.csv.gz

Output (in --out):
  train-images-idx3-ubyte / train-labels-idx1-ubyte   13,000 digits
  t10k-images-idx3-ubyte  / t10k-labels-idx1-ubyte     2,000 digits
Load with a validation holdout of 3000 to get a 10k/3k/2k split.
"""

import argparse
import gzip
import io
import json
import random
import struct
import subprocess
import sys
import tarfile
import tempfile
import zipfile
from pathlib import Path


def npm_digits(work):
    subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=work, check=True,
                   stdout=subprocess.DEVNULL)
    tgz = next(Path(work).glob("mnist-*.tgz"))
    out = []
    with tarfile.open(tgz) as tar:
        for label in range(10):
            data = json.load(tar.extractfile(f"package/src/digits/{label}.json"))["data"]
            for i in range(0, len(data), 784):
                out.append(([round(v * 255) for v in data[i:i + 784]], label))
    return out


def mlxtend_digits(work):
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "--quiet",
                    "mlxtend==0.24.0", "-d", work], check=True)
    wheel = next(Path(work).glob("mlxtend-*.whl"))
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    out = []
    for line in io.StringIO(raw.decode()):
        fields = line.strip().split(",")
        if len(fields) != 785:
            continue
        out.append(([int(float(v)) for v in fields[:-1]], int(float(fields[-1]))))
    return out


def write_images(path, rows):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for pixels, _ in rows:
            f.write(bytes(pixels))


def write_labels(path, rows):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(rows)))
        f.write(bytes(label for _, label in rows))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/mnist")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    with tempfile.TemporaryDirectory() as work:
        first = npm_digits(work)
        second = mlxtend_digits(work)
    rng = random.Random(args.seed)
    rng.shuffle(first)
    rng.shuffle(second)
    train = first + second[:3000]
    test = second[3000:]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "train-images-idx3-ubyte", train)
    write_labels(out / "train-labels-idx1-ubyte", train)
    write_images(out / "t10k-images-idx3-ubyte", test)
    write_labels(out / "t10k-labels-idx1-ubyte", test)
    print(f"wrote {len(train)} training and {len(test)} test digits to {out}")


if __name__ == "__main__":
    main()
