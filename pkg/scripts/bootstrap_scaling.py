"""How fast does the W(0,0) error bar shrink with acquisition size?

Runs the full simulate -> extract -> reconstruct chain at several heralded
segment counts, bootstraps the Wigner-origin estimate at each, and fits the
log-log slope of the error bar against the segment count.  Statistics says
the slope should sit near -1/2; this script is the empirical check.

    python3 scripts/bootstrap_scaling.py
    python3 scripts/bootstrap_scaling.py --sizes 2000 8000 32000 --replicas 200

Expect roughly a minute at the defaults; the biggest run dominates.
"""

import argparse
import time
from dataclasses import replace

import numpy as np

from heraldyne.fock import PhotonNumberDistribution
from heraldyne.pipeline import (
    calibrate,
    compute_variance_trace,
    extract_mode_function,
    project_quadratures,
)
from heraldyne.simulate import KIND_HERALDED, KIND_VACUUM, SimulationConfig, generate_batch
from heraldyne.wigner import bootstrap_negativity

BENCHMARK_P = (0.392, 0.572, 0.003, 0.028, 0.004, 0.001)


def error_bar(segments: int, replicas: int, seed: int) -> tuple[float, float, float]:
    """Origin estimate, bootstrap std, and significance at one batch size."""
    config = SimulationConfig(
        true_p=PhotonNumberDistribution(np.array(BENCHMARK_P)),
        segments=segments,
        rng_seed=seed,
    )
    heralded = generate_batch(config, KIND_HERALDED)
    vacuum = generate_batch(replace(config, segments=2000), KIND_VACUUM)
    mode = extract_mode_function(compute_variance_trace(heralded))
    _, heralded_ds = calibrate(
        project_quadratures(vacuum, mode), project_quadratures(heralded, mode)
    )
    boot = bootstrap_negativity(heralded_ds, cutoff=5, replicas=replicas, rng_seed=seed)
    return boot.origin_mean, boot.origin_std, boot.significance


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--sizes", type=int, nargs="+", default=[2000, 5000, 10000, 20000],
        help="heralded segment counts to compare",
    )
    parser.add_argument("--replicas", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(f"{'segments':>9}  {'origin':>9}  {'std':>8}  {'sigma':>6}  {'time':>6}")
    stds = []
    for segments in args.sizes:
        start = time.monotonic()
        mean, std, significance = error_bar(segments, args.replicas, args.seed)
        stds.append(std)
        print(
            f"{segments:9d}  {mean:+9.5f}  {std:8.5f}  {significance:6.1f}"
            f"  {time.monotonic() - start:5.1f}s"
        )

    if len(args.sizes) >= 2 and all(s > 0 for s in stds):
        slope = np.polyfit(np.log(args.sizes), np.log(stds), 1)[0]
        print(f"\nlog-log slope of std vs segments: {slope:+.3f} (expect about -0.5)")


if __name__ == "__main__":
    main()
