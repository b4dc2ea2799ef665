"""Shared fixtures-in-spirit: reference states and small utilities."""

import numpy as np

from heraldyne.fock import PhotonNumberDistribution

# Single-photon-dominant mixture used as the end-to-end benchmark state:
# roughly 57% one-photon and 39% vacuum, with a few percent of higher terms.
BENCHMARK_P = (0.392, 0.572, 0.003, 0.028, 0.004, 0.001)


def benchmark_distribution() -> PhotonNumberDistribution:
    return PhotonNumberDistribution(np.array(BENCHMARK_P))


def random_simplex(rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniform point on the probability simplex (exponential trick)."""
    w = rng.exponential(size=size)
    return w / w.sum()


def chi_square_pvalue(samples, pdf, bins=100, bounds=(-5.0, 5.0)) -> float:
    """Goodness-of-fit p-value of samples against a fully specified density.

    Expected bin masses come from 32-point Gauss-Legendre quadrature per bin;
    bins are merged left-to-right until every category expects >= 5 counts,
    and out-of-range mass forms its own category when large enough.
    """
    from scipy.stats import chi2

    samples = np.asarray(samples, dtype=float)
    total = samples.size
    counts, edges = np.histogram(samples, bins=bins, range=bounds)
    nodes, weights = np.polynomial.legendre.leggauss(32)
    mids = 0.5 * (edges[:-1] + edges[1:])
    halves = 0.5 * np.diff(edges)
    points = mids[:, None] + halves[:, None] * nodes[None, :]
    expected = total * halves * (pdf(points.ravel()).reshape(points.shape) @ weights)

    observed = list(counts.astype(float))
    expect = list(expected)
    outside_observed = float(total - counts.sum())
    outside_expected = float(total - expected.sum())
    if outside_expected >= 5.0:
        observed.append(outside_observed)
        expect.append(outside_expected)
    else:
        observed[-1] += outside_observed
        expect[-1] += outside_expected

    merged_o, merged_e = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expect):
        acc_o += o
        acc_e += e
        if acc_e >= 5.0:
            merged_o.append(acc_o)
            merged_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0.0:
        merged_o[-1] += acc_o
        merged_e[-1] += acc_e

    merged_o = np.asarray(merged_o)
    merged_e = np.asarray(merged_e)
    stat = float(np.sum((merged_o - merged_e) ** 2 / merged_e))
    dof = merged_o.size - 1
    return float(chi2.sf(stat, dof))
