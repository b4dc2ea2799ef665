"""Sweep detection efficiency and watch the Wigner negativity die.

Pushes the benchmark single-photon-dominant mixture through a binomial loss
channel at a range of efficiencies, then bisects for the threshold where
W(0,0) changes sign.
"""

import argparse

import numpy as np

from heraldyne.fock import apply_loss, wigner_origin
from heraldyne.wigner import negativity_report

BENCHMARK_P = (0.392, 0.572, 0.003, 0.028, 0.004, 0.001)


def origin_after_loss(p, efficiency: float) -> float:
    return wigner_origin(apply_loss(p, efficiency))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--lo", type=float, default=0.5, help="lowest efficiency")
    parser.add_argument("--hi", type=float, default=1.0, help="highest efficiency")
    parser.add_argument("--steps", type=int, default=11, help="sweep points")
    parser.add_argument(
        "--p", type=float, nargs="+", default=list(BENCHMARK_P),
        help="photon-number weights of the lossless state",
    )
    args = parser.parse_args()

    from heraldyne.fock import PhotonNumberDistribution

    p = PhotonNumberDistribution(np.array(args.p))
    print(f"lossless: W(0,0) = {wigner_origin(p):+.6f}")
    print(f"{'eta':>6}  {'W(0,0)':>10}  {'grid min':>10}  {'min radius':>10}")
    for eta in np.linspace(args.hi, args.lo, args.steps):
        lossy = apply_loss(p, float(eta))
        report = negativity_report(lossy)
        print(
            f"{eta:6.3f}  {report.origin:+10.6f}  {report.grid_min:+10.6f}"
            f"  {report.min_radius:10.3f}"
        )

    # The origin is linear in the thinned weights, so it crosses zero exactly
    # once on (0, 1] whenever the lossless state is negative there.
    if origin_after_loss(p, 1.0) < 0.0 < origin_after_loss(p, args.lo):
        lo, hi = args.lo, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if origin_after_loss(p, mid) < 0.0:
                hi = mid
            else:
                lo = mid
        print(f"\nnegativity threshold: eta = {0.5 * (lo + hi):.6f}")
    else:
        print("\nno sign change inside the sweep range")


if __name__ == "__main__":
    main()
