#!/usr/bin/env python3
"""Cut the first N samples of an MNIST-style IDX image/label pair.

Produces valid IDX files with the counts rewritten, so the result can be
loaded by the same code paths as the full dataset.

Usage:
  python scripts/subset_idx.py --images t10k-images-idx3-ubyte \
      --labels t10k-labels-idx1-ubyte --count 2000 --out-dir assets/mnist
"""

import argparse
import struct
from pathlib import Path


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--images", type=Path, required=True)
    ap.add_argument("--labels", type=Path, required=True)
    ap.add_argument("--count", type=int, required=True)
    ap.add_argument("--out-dir", type=Path, required=True)
    args = ap.parse_args()

    raw_img = args.images.read_bytes()
    magic, count, rows, cols = struct.unpack(">IIII", raw_img[:16])
    assert magic == 0x803, f"bad image magic: {magic:#x}"
    assert args.count <= count, f"only {count} images available"

    raw_lab = args.labels.read_bytes()
    lmagic, lcount = struct.unpack(">II", raw_lab[:8])
    assert lmagic == 0x801, f"bad label magic: {lmagic:#x}"
    assert lcount == count, "image/label counts differ"

    n = args.count
    args.out_dir.mkdir(parents=True, exist_ok=True)

    img_out = args.out_dir / f"t10k-{n}-images-idx3-ubyte"
    img_out.write_bytes(
        struct.pack(">IIII", magic, n, rows, cols)
        + raw_img[16 : 16 + n * rows * cols]
    )

    lab_out = args.out_dir / f"t10k-{n}-labels-idx1-ubyte"
    lab_out.write_bytes(struct.pack(">II", lmagic, n) + raw_lab[8 : 8 + n])

    print(f"wrote {img_out} and {lab_out} ({n} samples)")


if __name__ == "__main__":
    main()
