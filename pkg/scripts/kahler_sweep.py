"""Compare G with the Kahler cocycle on random pairs of disk isometries."""
import argparse
import math

import numpy as np

from sympcocycle.cocycle import G, CocycleContext, kahler_cocycle
from sympcocycle.geometry import HyperbolicDisk
from sympcocycle.symplectomap import MoebiusIsometry


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", type=int, default=50)
    ap.add_argument("--max-shift", type=float, default=2.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    ctx = CocycleContext(HyperbolicDisk())
    worst, biggest = 0.0, 0.0
    print(f"{'G':>12} {'K':>12} {'|G-K|':>10}")
    for _ in range(args.pairs):
        g = MoebiusIsometry.random(rng, args.max_shift)
        h = MoebiusIsometry.random(rng, args.max_shift)
        Gv, Kv = G(ctx, g, h), kahler_cocycle(ctx, g, h)
        worst = max(worst, abs(Gv - Kv))
        biggest = max(biggest, abs(Kv))
        print(f"{Gv:12.8f} {Kv:12.8f} {abs(Gv - Kv):10.2e}")
    print(f"max |G - K| = {worst:.3e}; max |K| = {biggest:.6f} (pi = {math.pi:.6f})")


if __name__ == "__main__":
    main()
