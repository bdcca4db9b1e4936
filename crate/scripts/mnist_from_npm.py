#!/usr/bin/env python3
"""Convert the 10k-digit subset bundled in the npm `mnist` package into IDX files.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist

The package stores each digit class as a flat JSON array of pixel intensities
rounded to three decimals (byte / 255), so the original bytes are recovered
exactly with round(v * 255). Samples are interleaved with a fixed permutation
and written as gzip-compressed IDX (magic 0x803 for images, 0x801 for labels).
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

ROWS = COLS = 28


def main(src: Path, dst: Path) -> None:
    images, labels = [], []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % (ROWS * COLS) == 0
        for k in range(len(data) // (ROWS * COLS)):
            chunk = data[k * ROWS * COLS:(k + 1) * ROWS * COLS]
            pixels = bytes(min(255, max(0, round(v * 255))) for v in chunk)
            images.append(pixels)
            labels.append(digit)

    order = list(range(len(images)))
    random.Random(20190417).shuffle(order)

    dst.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(dst / "mnist-10k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(order), ROWS, COLS))
        for i in order:
            f.write(images[i])
    with gzip.GzipFile(dst / "mnist-10k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(order)))
        f.write(bytes(labels[i] for i in order))
    print(f"wrote {len(order)} samples to {dst}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(Path(sys.argv[1]), Path(sys.argv[2]))
