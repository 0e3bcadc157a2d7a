"""Time the compiled and numpy LSTM sequence kernels on training-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import json
import timeit

import numpy as np

from dinendt import kernels

SHAPES = [  # (steps, batch, input dim, hidden)
    (32, 32, 1, 50),
    (32, 32, 2, 50),
    (32, 32, 3, 100),
    (64, 8, 8, 50),
]


def bench(fwd, bwd, shape, repeat):
    steps, batch, d, hid = shape
    rng = np.random.default_rng(0)
    xs = rng.standard_normal((steps, batch, d))
    w = 0.3 * rng.standard_normal((d + hid, 4 * hid))
    b = 0.3 * rng.standard_normal(4 * hid)
    dh = rng.standard_normal((steps, batch, hid))
    dc = np.zeros_like(dh)

    def once():
        _, cache = fwd(xs, w, b)
        bwd(cache, dh, dc)
    once()
    return min(timeit.repeat(once, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = kernels.available_backends()
    rows = []
    for shape in SHAPES:
        row = {"shape": shape}
        for name, (fwd, bwd) in backends.items():
            row[name] = bench(fwd, bwd, shape, args.repeat)
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        rows.append(row)
        times = "  ".join(f"{k} {row[k] * 1e3:8.3f} ms" for k in backends)
        extra = f"  speedup {row['speedup']:.2f}x" if "speedup" in row else ""
        print(f"T={shape[0]:3d} B={shape[1]:3d} d={shape[2]:2d} H={shape[3]:3d}  {times}{extra}")
    print(json.dumps({"default_backend": kernels.BACKEND, "rows": rows}))


if __name__ == "__main__":
    main()
