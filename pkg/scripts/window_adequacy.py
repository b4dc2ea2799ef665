"""When does a finite Wigner grid clip the state it is trying to hold?

The grid constructor refuses windows that visibly lose probability mass
(the deficit shows up in the trapezoid integral long before it corrupts a
negativity readout).  This script maps that boundary for pure Fock states:
for each photon number it reports the true tail mass outside a centered
square window of a given half-width, next to what the constructor does.

Tail mass is computed by radial quadrature of 2*pi*r*W(r) from the window
edge outward -- it is a property of the state, not of the grid resolution,
which is why shrinking the pixel size never fixes a clipped window.
"""

import argparse

import numpy as np
from scipy.integrate import quad

from heraldyne.fock import PhotonNumberDistribution, wigner_eval
from heraldyne.wigner import wigner_grid


def tail_mass(p: PhotonNumberDistribution, radius: float) -> float:
    value, _ = quad(
        lambda r: 2.0 * np.pi * r * wigner_eval(p, r, 0.0), radius, np.inf, limit=200
    )
    return value


def grid_status(p: PhotonNumberDistribution, extent: float, resolution: int) -> str:
    try:
        grid = wigner_grid(p, extent=extent, resolution=resolution)
    except ValueError:
        return "rejected (window too small)"
    return f"deficit {abs(grid.integral - 1.0):8.1e}"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--max-n", type=int, default=10, help="largest Fock state")
    parser.add_argument(
        "--extents", type=float, nargs="+", default=[5.0, 6.0, 7.0, 8.0]
    )
    parser.add_argument("--resolution", type=int, default=301)
    args = parser.parse_args()

    header = f"{'n':>3}" + "".join(f"  {f'extent {e:g}':>28}" for e in args.extents)
    print(header)
    for n in range(args.max_n + 1):
        weights = np.zeros(n + 1)
        weights[n] = 1.0
        p = PhotonNumberDistribution(weights)
        cells = []
        for extent in args.extents:
            outside = tail_mass(p, extent)
            cells.append(f"tail {outside:7.1e} {grid_status(p, extent, args.resolution)}")
        print(f"{n:3d}" + "".join(f"  {c:>28}" for c in cells))


if __name__ == "__main__":
    main()
