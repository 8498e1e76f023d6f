#!/usr/bin/env python3
"""Regenerate the MNIST IDX fixtures under data/mnist/ from the npm `mnist` package.

The npm package `mnist` (https://www.npmjs.com/package/mnist) ships 10,010 MNIST
digits (863-1,127 per class) as JSON, one file per class, each pixel stored as
the original uint8 value divided by 255. This script converts them back to uint8
and writes standard IDX files (big-endian magic 0x00000803 / 0x00000801):

    mnist-subset-train-images.idx3-ubyte   6,600 images (660 per class)
    mnist-subset-train-labels.idx1-ubyte
    mnist-subset-test-images.idx3-ubyte    2,000 images (200 per class)
    mnist-subset-test-labels.idx1-ubyte

The split is stratified and deterministic (seed 0). Usage:

    python3 tools/mnist_from_npm.py <path-to-node_modules/mnist/src/digits> [out_dir]
"""

import json
import random
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 660
TEST_PER_CLASS = 200
ROWS = COLS = 28


def load_class(digits_dir: Path, digit: int) -> list[bytes]:
    raw = json.loads((digits_dir / f"{digit}.json").read_text())["data"]
    n, rem = divmod(len(raw), ROWS * COLS)
    if rem:
        raise SystemExit(f"{digit}.json: length {len(raw)} is not a multiple of 784")
    images = []
    for i in range(n):
        px = raw[i * 784 : (i + 1) * 784]
        images.append(bytes(round(v * 255) for v in px))
    return images


def write_idx(out_dir: Path, stem: str, images: list[bytes], labels: list[int]) -> None:
    img_path = out_dir / f"{stem}-images.idx3-ubyte"
    lab_path = out_dir / f"{stem}-labels.idx1-ubyte"
    with img_path.open("wb") as f:
        f.write(struct.pack(">iiii", 0x00000803, len(images), ROWS, COLS))
        for img in images:
            f.write(img)
    with lab_path.open("wb") as f:
        f.write(struct.pack(">ii", 0x00000801, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {img_path} ({img_path.stat().st_size} bytes), {lab_path}")


def main() -> None:
    if len(sys.argv) < 2:
        raise SystemExit(__doc__)
    digits_dir = Path(sys.argv[1])
    out_dir = Path(sys.argv[2]) if len(sys.argv) > 2 else Path(__file__).resolve().parent.parent / "data" / "mnist"
    out_dir.mkdir(parents=True, exist_ok=True)

    rng = random.Random(0)
    train: list[tuple[bytes, int]] = []
    test: list[tuple[bytes, int]] = []
    for digit in range(10):
        images = load_class(digits_dir, digit)
        if len(images) < TRAIN_PER_CLASS + TEST_PER_CLASS:
            raise SystemExit(f"class {digit}: only {len(images)} images")
        order = list(range(len(images)))
        rng.shuffle(order)
        train += [(images[i], digit) for i in order[:TRAIN_PER_CLASS]]
        test += [(images[i], digit) for i in order[TRAIN_PER_CLASS : TRAIN_PER_CLASS + TEST_PER_CLASS]]

    # Interleave classes deterministically so any prefix is roughly balanced.
    rng.shuffle(train)
    rng.shuffle(test)
    write_idx(out_dir, "mnist-subset-train", [t[0] for t in train], [t[1] for t in train])
    write_idx(out_dir, "mnist-subset-test", [t[0] for t in test], [t[1] for t in test])


if __name__ == "__main__":
    main()
