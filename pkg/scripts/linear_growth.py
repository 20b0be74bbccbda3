"""Table of G(g^n, h) for a bump flow g fixing the basepoint and the bump centre."""
import argparse

import numpy as np

from sympcocycle.cocycle import CocycleContext, IsotopySpec
from sympcocycle.geometry import EuclideanPlane
from sympcocycle.groups import polterovich_report
from sympcocycle.hamiltonian import bump_hamiltonian
from sympcocycle.symplectomap import translation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--amplitude", type=float, default=0.7)
    ap.add_argument("--radius", type=float, default=1.0)
    ap.add_argument("--n-max", type=int, default=16)
    args = ap.parse_args()

    centre = np.array([0.5, 0.2])
    ctx = CocycleContext(EuclideanPlane(), (centre[0] + args.radius + 0.5, centre[1]))
    iso = IsotopySpec(bump_hamiltonian(centre, args.radius, args.amplitude))
    rep = polterovich_report(ctx, iso, translation(centre - ctx.x), n_max=args.n_max)
    print(f"G(g,h) = {rep.G_gh:.12f}, action difference = {rep.action_diff:.12f}")
    print(f"{'n':>3} {'G(g^n,h)':>16} {'n G(g,h)':>16} {'rel dev':>10}")
    for n, val, ref, dev in rep.linearity:
        print(f"{n:3d} {val:16.12f} {ref:16.12f} {dev:10.2e}")
    print(f"monotone growth: {rep.monotone_growth}")


if __name__ == "__main__":
    main()
