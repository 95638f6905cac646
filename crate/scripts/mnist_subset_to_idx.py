#!/usr/bin/env python3
"""Convert the 10k-digit MNIST subset shipped by the `mnist` npm package into IDX files.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset_to_idx.py package/src/digits data/mnist-subset

The npm package stores each digit class as a flat JSON array of pixels already
divided by 255 and rounded to three decimals; multiplying by 255 and rounding
recovers the original bytes. Samples are shuffled with a fixed seed so that any
prefix/suffix split is class balanced.
"""
import json
import random
import struct
import sys
from pathlib import Path


def main(src: Path, dst: Path) -> None:
    samples = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for k in range(len(data) // 784):
            pixels = bytes(round(v * 255) for v in data[k * 784:(k + 1) * 784])
            samples.append((pixels, digit))
    random.Random(20210101).shuffle(samples)

    dst.mkdir(parents=True, exist_ok=True)
    with open(dst / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(samples), 28, 28))
        for pixels, _ in samples:
            f.write(pixels)
    with open(dst / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(samples)))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {len(samples)} samples to {dst}")


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
