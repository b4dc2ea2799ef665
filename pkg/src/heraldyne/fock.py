"""Fock-basis quadrature statistics for phase-randomized optical states.

Everything downstream (simulation, reconstruction, Wigner analysis) rests on
two families of exactly-known functions of the photon number n:

* the quadrature probability density of the Fock state ``|n>``,

      Q_n(x) = H_n(x)^2 exp(-x^2) / (sqrt(pi) 2^n n!),

  with ``H_n`` the physicists' Hermite polynomial, and

* the phase-averaged Wigner function of a photon-number mixture
  ``rho = sum_n p_n |n><n|``,

      W(x, y) = (1/pi) sum_n (-1)^n p_n L_n(2 r^2) exp(-r^2),
      r^2 = x^2 + y^2,

  with ``L_n`` the Laguerre polynomial.

Conventions: vacuum quadrature variance is 1/2 (hbar = 1), so
``Var[x]_n = (2n + 1)/2``.  Polynomials are evaluated by their three-term
recurrences in float64; orders above ``POLY_ORDER_LIMIT`` are rejected
rather than returned inaccurately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "POLY_ORDER_LIMIT",
    "PhotonNumberDistribution",
    "hermite",
    "laguerre",
    "fock_quadrature_pdf",
    "fock_variance",
    "mixture_pdf",
    "wigner_eval",
    "wigner_origin",
    "apply_loss",
]

#: Largest polynomial order evaluated by the float64 recurrences.  Beyond
#: this the Hermite recurrence loses enough precision that Q_n tails are
#: no longer trustworthy, so we refuse instead of silently degrading.
POLY_ORDER_LIMIT = 64

_LOG_PI = math.log(math.pi)
_LOG_2 = math.log(2.0)

#: Tolerance on |sum(p) - 1| accepted by :class:`PhotonNumberDistribution`.
_NORMALIZATION_TOL = 1e-12


def _check_order(n: int) -> int:
    """Validate a polynomial order / photon number argument."""
    if not isinstance(n, (int, np.integer)):
        raise TypeError(f"order must be an integer, got {type(n).__name__}")
    if n < 0:
        raise ValueError(f"order must be non-negative, got {n}")
    if n > POLY_ORDER_LIMIT:
        raise ValueError(
            f"order {n} exceeds the float64 guard limit {POLY_ORDER_LIMIT}"
        )
    return int(n)


def hermite(n, x):
    """Physicists' Hermite polynomial H_n(x).

    Evaluated with the stable three-term recurrence
    ``H_{k+1}(x) = 2 x H_k(x) - 2 k H_{k-1}(x)`` starting from
    ``H_0 = 1``, ``H_1 = 2x``.  Accepts scalars or arrays.
    """
    n = _check_order(n)
    xa = np.asarray(x, dtype=float)
    h_prev = np.ones_like(xa)
    if n == 0:
        return float(h_prev) if xa.ndim == 0 else h_prev
    h = 2.0 * xa
    for k in range(1, n):
        h, h_prev = 2.0 * xa * h - (2.0 * k) * h_prev, h
    return float(h) if xa.ndim == 0 else h


def laguerre(n, x):
    """Laguerre polynomial L_n(x) via the recurrence

    ``(k+1) L_{k+1}(x) = (2k + 1 - x) L_k(x) - k L_{k-1}(x)``,
    starting from ``L_0 = 1``, ``L_1 = 1 - x``.  Accepts scalars or arrays.
    """
    n = _check_order(n)
    xa = np.asarray(x, dtype=float)
    l_prev = np.ones_like(xa)
    if n == 0:
        return float(l_prev) if xa.ndim == 0 else l_prev
    l = 1.0 - xa
    for k in range(1, n):
        l, l_prev = ((2.0 * k + 1.0 - xa) * l - k * l_prev) / (k + 1.0), l
    return float(l) if xa.ndim == 0 else l


def fock_quadrature_pdf(n, x):
    """Quadrature density Q_n(x) of the Fock state ``|n>``.

    The prefactor ``1 / (sqrt(pi) 2^n n!)`` is carried in log space and
    split across the squared amplitude, so the result stays finite for
    every allowed order instead of overflowing in ``n!``.
    """
    n = _check_order(n)
    half_log_pref = -0.5 * (0.5 * _LOG_PI + n * _LOG_2 + math.lgamma(n + 1))
    xa = np.asarray(x, dtype=float)
    amp = hermite(n, xa) * np.exp(half_log_pref - 0.5 * xa * xa)
    out = np.asarray(amp) ** 2
    return float(out) if xa.ndim == 0 else out


def fock_variance(n) -> float:
    """Quadrature variance (2n + 1)/2 of the Fock state ``|n>``."""
    n = _check_order(n)
    return (2.0 * n + 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class PhotonNumberDistribution:
    """Probability vector over the Fock states ``|0> .. |N>``.

    The diagonal of a phase-randomized density matrix: entries are
    non-negative, finite, and sum to one within ``1e-12``.  The array is
    copied and frozen on construction.
    """

    probs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("probs must be a non-empty 1-d array")
        if arr.size > POLY_ORDER_LIMIT + 1:
            raise ValueError(
                f"cutoff {arr.size - 1} exceeds the guard limit {POLY_ORDER_LIMIT}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("probs must be finite")
        if np.any(arr < 0.0):
            raise ValueError("probs must be non-negative")
        total = float(arr.sum())
        if abs(total - 1.0) > _NORMALIZATION_TOL:
            raise ValueError(f"probs must sum to 1 within 1e-12, got {total!r}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "probs", arr)

    @property
    def cutoff(self) -> int:
        """Largest photon number carried, ``N = len(probs) - 1``."""
        return self.probs.size - 1

    @classmethod
    def from_weights(cls, weights) -> "PhotonNumberDistribution":
        """Normalize non-negative weights into a distribution."""
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0.0):
            raise ValueError("weights must be non-negative")
        total = w.sum()
        if total <= 0.0:
            raise ValueError("weights must have a positive sum")
        return cls(w / total)

    def mean_photon_number(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)


def mixture_pdf(p: PhotonNumberDistribution, x):
    """Quadrature density ``sum_n p_n Q_n(x)`` of a photon-number mixture.

    This is the single-quadrature model for phase-randomized detection:
    all phase coherence averages out and only the diagonal weights
    survive.  Accepts scalars or arrays.
    """
    xa = np.asarray(x, dtype=float)
    out = np.zeros_like(xa)
    for n, pn in enumerate(p.probs):
        if pn != 0.0:
            out += pn * fock_quadrature_pdf(n, xa)
    return float(out) if xa.ndim == 0 else out


def _wigner_radial(p: PhotonNumberDistribution, r2):
    """Wigner function of the mixture as a function of squared radius."""
    r2 = np.asarray(r2, dtype=float)
    acc = np.zeros_like(r2)
    for n, pn in enumerate(p.probs):
        if pn == 0.0:
            continue
        term = pn * laguerre(n, 2.0 * r2)
        if n % 2:
            acc -= term
        else:
            acc += term
    return acc * np.exp(-r2) / math.pi


def wigner_eval(p: PhotonNumberDistribution, x, y):
    """Wigner function W(x, y) of the phase-randomized mixture.

    Rotationally symmetric by construction; accepts scalars or
    broadcastable arrays for grid evaluation.
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    out = _wigner_radial(p, xa * xa + ya * ya)
    return float(out) if out.ndim == 0 else out


def wigner_origin(p: PhotonNumberDistribution) -> float:
    """W(0, 0) = (1/pi) sum_n (-1)^n p_n — negative iff odd states dominate.

    Bounded below by -1/pi; delegates to :func:`wigner_eval` so the two
    agree bit for bit at the origin.
    """
    return wigner_eval(p, 0.0, 0.0)


def apply_loss(
    p: PhotonNumberDistribution, efficiency: float
) -> PhotonNumberDistribution:
    """Push a photon-number distribution through a lossy channel.

    Each n-photon component is binomially thinned with survival
    probability ``efficiency``:

        p'_m = sum_{n >= m} p_n C(n, m) eta^m (1 - eta)^(n - m).

    Total probability is conserved, the cutoff never grows, and
    ``efficiency = 1`` is the identity.
    """
    eta = float(efficiency)
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"efficiency must lie in [0, 1], got {eta!r}")
    out = np.zeros_like(p.probs)
    for n, pn in enumerate(p.probs):
        if pn == 0.0:
            continue
        for m in range(n + 1):
            out[m] += pn * math.comb(n, m) * eta**m * (1.0 - eta) ** (n - m)
    return PhotonNumberDistribution(out)
