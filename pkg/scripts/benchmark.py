"""Time a fit and record peak resident memory.

    python3 scripts/benchmark.py --n 16 --delta 0.99 --threads 4
"""
import argparse
import resource
import time

import numpy as np

from tvpdma import DmaConfig, run_dma
from tvpdma.engine import DmaEngine, default_threads


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--t", type=int, default=500)
    ap.add_argument("--n", type=int, default=6)
    ap.add_argument("--delta", default="0.90,0.91,0.92,0.93,0.94,0.95,0.96,0.97,0.98,0.99,1.00")
    ap.add_argument("--threads", type=int, default=default_threads())
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    F = np.column_stack([np.ones(args.t), rng.standard_normal((args.t, args.n - 1))])
    y = F[:, : min(3, args.n)].sum(axis=1) + rng.standard_normal(args.t)
    cfg = DmaConfig(delta_grid=tuple(float(v) for v in args.delta.split(",")), threads=args.threads)

    eng = DmaEngine(args.n, cfg)
    state_mb = eng.state_nbytes() / 2**20
    eng.close()
    t0 = time.perf_counter()
    out = run_dma(y, F, cfg)
    secs = time.perf_counter() - t0
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024
    print(f"T={args.t} n={args.n} d={cfg.d} k={out.k} threads={args.threads}: "
          f"{secs:.2f}s, state {state_mb:.1f} MB, peak RSS {rss:.0f} MB")


if __name__ == "__main__":
    main()
