#!/usr/bin/env python3
"""Train the four-group LeNet used by the examples and export it as a QSCW file.

The network matches assets/lenet.json: conv1(20@5x5) -> maxpool 2x2 ->
conv2(50@5x5) -> maxpool 2x2 -> ip1(500) + relu -> ip2(10). Inputs are raw
MNIST pixels scaled to [0, 1]; no mean subtraction, so the exported weights
can be evaluated directly against IDX files loaded by the qsc CLI.

Usage:
  python scripts/train_lenet.py --data DIR --out assets/lenet.qscw [--epochs 5]

The shipped assets/lenet.qscw was produced with:
  python scripts/train_lenet.py --data DIR --out assets/lenet.qscw \
      --epochs 10 --batch-size 64 --optimizer sgd
(best epoch kept; full-test-set top-1 0.9917). The SGD recipe yields more
differentiated per-layer weight magnitudes than Adam, which matters for
per-layer precision studies.

DIR must contain the unzipped MNIST IDX files:
  train-images-idx3-ubyte  train-labels-idx1-ubyte
  t10k-images-idx3-ubyte   t10k-labels-idx1-ubyte
"""

import argparse
import struct
import sys
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


def read_idx_images(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    assert magic == 0x803, f"bad image magic in {path}: {magic:#x}"
    data = np.frombuffer(raw, dtype=np.uint8, offset=16)
    return data.reshape(count, 1, rows, cols)


def read_idx_labels(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    magic, count = struct.unpack(">II", raw[:8])
    assert magic == 0x801, f"bad label magic in {path}: {magic:#x}"
    return np.frombuffer(raw, dtype=np.uint8, offset=8)


class LeNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 20, 5)
        self.conv2 = nn.Conv2d(20, 50, 5)
        self.ip1 = nn.Linear(50 * 4 * 4, 500)
        self.ip2 = nn.Linear(500, 10)

    def forward(self, x):
        x = F.max_pool2d(self.conv1(x), 2, 2)
        x = F.max_pool2d(self.conv2(x), 2, 2)
        x = x.flatten(1)
        x = F.relu(self.ip1(x))
        return self.ip2(x)


def write_qscw(path: Path, tensors: dict):
    out = bytearray()
    out += b"QSCW"
    out += struct.pack("<I", 1)
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<B", arr.ndim)
        for extent in arr.shape:
            out += struct.pack("<I", extent)
        out += arr.tobytes()
    path.write_bytes(bytes(out))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", type=Path, required=True)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--batch-size", type=int, default=128)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument(
        "--optimizer",
        choices=["adam", "sgd"],
        default="adam",
        help="adam: fast convergence; sgd: Caffe-style momentum SGD with "
        "inverse-decay learning rate, which tends to leave the layers with "
        "more differentiated weight scales",
    )
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    np.random.seed(args.seed)

    train_x = read_idx_images(args.data / "train-images-idx3-ubyte")
    train_y = read_idx_labels(args.data / "train-labels-idx1-ubyte")
    test_x = read_idx_images(args.data / "t10k-images-idx3-ubyte")
    test_y = read_idx_labels(args.data / "t10k-labels-idx1-ubyte")

    train_x = torch.from_numpy(train_x.astype(np.float32) / 255.0)
    train_y = torch.from_numpy(train_y.astype(np.int64))
    test_x = torch.from_numpy(test_x.astype(np.float32) / 255.0)
    test_y = torch.from_numpy(test_y.astype(np.int64))

    model = LeNet()
    if args.optimizer == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=1e-3, weight_decay=1e-4)
    else:
        opt = torch.optim.SGD(
            model.parameters(), lr=0.01, momentum=0.9, weight_decay=5e-4
        )

    if args.optimizer == "adam":
        # Halve every two epochs.
        sched = torch.optim.lr_scheduler.StepLR(opt, step_size=2, gamma=0.5)
    else:
        # Caffe-style inv schedule per step: lr = base * (1 + g*t)^(-p).
        sched = torch.optim.lr_scheduler.LambdaLR(
            opt, lambda t: (1.0 + 1e-4 * t) ** -0.75
        )

    def test_top1() -> float:
        model.eval()
        correct = 0
        with torch.no_grad():
            for i in range(0, len(test_x), 500):
                pred = model(test_x[i : i + 500]).argmax(1)
                correct += (pred == test_y[i : i + 500]).sum().item()
        return correct / len(test_x)

    best_acc = 0.0
    best_state = None
    n = len(train_x)
    for epoch in range(args.epochs):
        model.train()
        perm = torch.randperm(n)
        for i in range(0, n, args.batch_size):
            idx = perm[i : i + args.batch_size]
            opt.zero_grad()
            loss = F.cross_entropy(model(train_x[idx]), train_y[idx])
            loss.backward()
            opt.step()
            if args.optimizer == "sgd":
                sched.step()
        if args.optimizer == "adam":
            sched.step()
        acc = test_top1()
        print(f"epoch {epoch + 1}: test top-1 = {acc:.4f}", flush=True)
        if acc > best_acc:
            best_acc = acc
            best_state = {k: v.clone() for k, v in model.state_dict().items()}

    model.load_state_dict(best_state)
    print(f"best test top-1 = {best_acc:.4f}")
    if best_acc < 0.985:
        print("warning: accuracy below 0.985; consider more epochs", file=sys.stderr)

    state = model.state_dict()
    write_qscw(
        args.out,
        {
            "conv1_w": state["conv1.weight"].numpy(),
            "conv1_b": state["conv1.bias"].numpy(),
            "conv2_w": state["conv2.weight"].numpy(),
            "conv2_b": state["conv2.bias"].numpy(),
            "ip1_w": state["ip1.weight"].numpy(),
            "ip1_b": state["ip1.bias"].numpy(),
            "ip2_w": state["ip2.weight"].numpy(),
            "ip2_b": state["ip2.bias"].numpy(),
        },
    )
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
