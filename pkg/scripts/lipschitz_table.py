"""Sampled cocycle norms of all reduced words over two bump generators, by length."""
import argparse

from sympcocycle.cocycle import CocycleContext
from sympcocycle.geometry import EuclideanPlane
from sympcocycle.groups import GeneratingSet, lipschitz_check
from sympcocycle.hamiltonian import FlowSettings, bump_hamiltonian
from sympcocycle.symplectomap import CompactBump, translation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-length", type=int, default=8)
    ap.add_argument("--amplitude", type=float, default=0.15)
    ap.add_argument("--rk4", action="store_true", help="integrate the flows instead of using the closed form")
    args = ap.parse_args()

    plane = EuclideanPlane()
    settings = FlowSettings() if args.rk4 else FlowSettings(method="exact")
    S = GeneratingSet({
        "a": CompactBump(bump_hamiltonian([0.5, 0.2], 1.0, args.amplitude), model=plane, settings=settings),
        "b": CompactBump(bump_hamiltonian([-0.3, 0.4], 0.8, -args.amplitude), model=plane, settings=settings),
    })
    sample = [translation(v) for v in ([-1.5, 0.2], [-2.3, 0.4], [-1.8, -0.3], [-2.0, 0.0])]
    rep = lipschitz_check(CocycleContext(plane, (2.0, 0.0)), S, sample, args.max_length)
    print("generator upper bounds: " + ", ".join(f"{k}={v:.6f}" for k, v in rep.generator_bounds.items()))
    print(f"{'len':>3} {'words':>6} {'max norm_est':>13} {'slope * len':>12}")
    for L, count, mx, bound in rep.by_length:
        print(f"{L:3d} {count:6d} {mx:13.6f} {bound:12.6f}")
    print(f"words: {rep.n_words}, worst margin {rep.worst_margin:.3e}, "
          f"quadrature error <= {rep.max_quadrature_error:.1e}, holds: {rep.holds}")


if __name__ == "__main__":
    main()
