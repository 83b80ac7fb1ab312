"""Time one engine step on random frames of a given size.

    python3 scripts/bench_step.py --size 512 --steps 30
"""

import argparse
import time

import numpy as np

from rcamotion.rca import RcaEngine


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--steps", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    frames = [rng.random((args.size, args.size)) for _ in range(args.steps + 1)]
    eng = RcaEngine()
    eng.step(frames[0])
    times = []
    for f in frames[1:]:
        t0 = time.perf_counter()
        eng.step(f)
        times.append(time.perf_counter() - t0)
    ms = 1e3 * np.array(times)
    print(f"size={args.size} steps={args.steps} median_ms={np.median(ms):.1f} "
          f"min_ms={ms.min():.1f} max_ms={ms.max():.1f}")


if __name__ == "__main__":
    main()
