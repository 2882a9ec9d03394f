"""Time the saturating integer convolution on each available backend.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--saturating]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from nodesplit import kernels

# (H, W, Cin, k, Cout, stride): node layers of the bundled autoencoders
CASES = {
    "ae1_B1": (128, 128, 3, 5, 128, 2),
    "ae1_B2": (32, 32, 128, 3, 64, 2),
    "ae2_B1": (256, 256, 3, 3, 16, 2),
    "ae2_B3": (64, 64, 32, 3, 4, 4),
}


def make_case(h, w, cin, k, cout, stride, saturating, rng):
    if saturating:
        x = np.full((h, w, cin), 32767, np.int32)
        wt = np.full((k, k, cin, cout), 511, np.int32)
    else:
        x = rng.integers(0, 256, (h, w, cin)).astype(np.int32)
        wt = rng.integers(-511, 512, (k, k, cin, cout)).astype(np.int32)
    bias = rng.integers(-1000, 1000, cout)
    oh, ow = -(-h // stride), -(-w // stride)
    pt = max((oh - 1) * stride + k - h, 0) // 2
    pl = max((ow - 1) * stride + k - w, 0) // 2
    return x, wt, bias, stride, pt, pl, oh, ow


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--saturating", action="store_true", help="inputs that overflow every accumulator")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    names = kernels.available_backends()
    print(f"{'case':10s} {'MACs':>12s} " + " ".join(f"{n + ' ms':>12s}" for n in names) + "   identical")
    for label, dims in CASES.items():
        case = make_case(*dims, args.saturating, rng)
        h, w, cin, k, cout, s = dims
        macs = case[6] * case[7] * k * k * cin * cout
        times, outs = [], []
        for name in names:
            with kernels.backend_scope(name):
                best = float("inf")
                for _ in range(args.repeat):
                    t0 = time.perf_counter()
                    out = kernels.conv2d_sat(*case)
                    best = min(best, time.perf_counter() - t0)
            times.append(best)
            outs.append(out)
        same = all((o[0] == outs[0][0]).all() and o[1] == outs[0][1] for o in outs[1:])
        print(f"{label:10s} {macs:12d} " + " ".join(f"{t * 1e3:12.2f}" for t in times) + f"   {same}")


if __name__ == "__main__":
    main()
