"""Photon-number reconstruction from calibrated quadrature samples.

Two estimators of the diagonal weights p_n, deliberately independent:

* a constrained least-squares fit of the binned quadrature histogram to
  bin-averaged Fock densities, solved by projected gradient descent on the
  probability simplex, and

* expectation-maximization of the exact likelihood
  L = prod_k P(X_k), P(X) = sum_n p_n Q_n(X), via the multiplicative update

      p_m <- (p_m / K) * sum_k Q_m(X_k) / sum_n p_n Q_n(X_k),

  which preserves the simplex and never decreases the likelihood.

The EM inner loop is the hot path (bootstrap repeats it hundreds of times),
so it runs as a fused compiled kernel — one pass per iteration computes the
compensated log-likelihood and the update sums together.  A pure-NumPy
fallback with identical semantics covers environments without a JIT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InputFormatError, ReconstructionError
from .fock import PhotonNumberDistribution, fock_quadrature_pdf, mixture_pdf
from .pipeline import QuadratureDataset

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

__all__ = [
    "HistogramModel",
    "LsFitResult",
    "EmResult",
    "build_histogram",
    "fit_mixture_ls",
    "log_likelihood",
    "em_step",
    "em_reconstruct",
    "reconstruction_record",
    "write_reconstruction_json",
    "read_reconstruction_json",
]

EM_DEFAULT_TOL = 1e-10
EM_DEFAULT_MAX_ITER = 10_000

#: Mixture weights below this underflow threshold are pinned to exact zero
#: (EM can never revive a zero component anyway).
UNDERFLOW_PIN = 1e-300

#: Condition number of the estimated Fisher information above which the
#: maximum-likelihood solution is flagged as sitting on a near-flat
#: direction (data barely constrain some component combination).
FISHER_CONDITION_LIMIT = 1e10


# ---------------------------------------------------------------------------
# histogram


@dataclass(frozen=True, eq=False)
class HistogramModel:
    """Binned density estimate: edges, normalized densities, raw counts.

    ``n_outside`` records values that fell outside the bin range; densities
    normalize over in-range mass only, so sum(density * width) = 1.
    """

    bin_edges: np.ndarray
    densities: np.ndarray
    counts: np.ndarray
    n_outside: int = 0

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        dens = np.asarray(self.densities, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("bin_edges must hold at least two edges")
        if not np.all(np.isfinite(edges)):
            raise ValueError("bin_edges must be finite")
        if np.any(np.diff(edges) <= 0.0):
            raise ValueError("bin_edges must be strictly ascending")
        if dens.shape != (edges.size - 1,) or counts.shape != dens.shape:
            raise ValueError("densities and counts must have one entry per bin")
        if np.any(dens < 0.0) or np.any(counts < 0):
            raise ValueError("densities and counts must be non-negative")
        total = float(dens @ np.diff(edges))
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"sum(density * width) must be 1 within 1e-9, got {total!r}")
        if int(self.n_outside) < 0:
            raise ValueError("n_outside must be non-negative")
        for name, arr in (("bin_edges", edges), ("densities", dens), ("counts", counts)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "n_outside", int(self.n_outside))

    @property
    def bin_widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)


def build_histogram(
    data: QuadratureDataset, bins: int = 100, range: tuple[float, float] = (-5.0, 5.0)
) -> HistogramModel:
    """Histogram of the dataset with densities normalized over in-range mass."""
    lo, hi = float(range[0]), float(range[1])
    if bins < 10:
        raise ValueError(f"bins must be >= 10, got {bins}")
    if not lo < hi:
        raise ValueError(f"range must be ordered, got ({lo!r}, {hi!r})")
    values = data.values
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    inside = int(counts.sum())
    if inside == 0:
        raise DegenerateDataError("no data points fall inside the histogram range")
    densities = counts / (inside * np.diff(edges))
    return HistogramModel(
        bin_edges=edges,
        densities=densities,
        counts=counts,
        n_outside=values.size - inside,
    )


def _bin_averaged_pdfs(edges: np.ndarray, cutoff: int, nodes: int = 8) -> np.ndarray:
    """Q_n averaged over each bin by Gauss-Legendre quadrature: (bins, N+1)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    mids = 0.5 * (edges[:-1] + edges[1:])
    halves = 0.5 * np.diff(edges)
    points = (mids[:, None] + halves[:, None] * x[None, :]).ravel()
    avg_weights = w / 2.0
    model = np.empty((mids.size, cutoff + 1))
    for n in range(cutoff + 1):
        model[:, n] = fock_quadrature_pdf(n, points).reshape(mids.size, nodes) @ avg_weights
    return model


# ---------------------------------------------------------------------------
# constrained least squares


@dataclass(frozen=True, eq=False)
class LsFitResult:
    """Simplex-constrained least-squares fit with its diagnostics."""

    p_hat: PhotonNumberDistribution
    iterations: int
    objective: float
    gradient_norm: float
    converged: bool = True


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {p : p >= 0, sum p = 1} (sort-based)."""
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u) - 1.0
    rho = np.flatnonzero(u * np.arange(1, v.size + 1) > cumulative)[-1]
    theta = cumulative[rho] / (rho + 1.0)
    return np.clip(v - theta, 0.0, None)


def fit_mixture_ls(
    hist: HistogramModel,
    cutoff: int,
    *,
    gradient_tol: float = 1e-10,
    max_iter: int = 100_000,
) -> LsFitResult:
    """Fit mixture weights to the histogram by projected gradient descent.

    Minimizes ||A p - y||^2 over the probability simplex, where A holds the
    bin-averaged Fock densities and y the observed densities.  The step size
    adapts by a multiplicative search (gentle growth, halving backtrack under
    the standard sufficient-decrease test); iteration stops when the
    unit-step projected-gradient residual ||p - proj(p - grad)|| drops below
    ``gradient_tol``.  Exact zeros in the solution are reachable — the
    simplex projection lands on faces.

    The iteration runs in extended precision.  Near the optimum the
    objective is flat enough that double-precision rounding (ulp ~ 1e-19 at
    typical objective scales) swallows the per-step decrease long before the
    residual reaches ``gradient_tol``; 80-bit arithmetic leaves the line
    search ~1000x of headroom below it.
    """
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    model = _bin_averaged_pdfs(hist.bin_edges, cutoff).astype(np.longdouble)
    target = hist.densities.astype(np.longdouble)
    p = np.full(cutoff + 1, 1.0 / (cutoff + 1), dtype=np.longdouble)
    residual = model @ p - target
    objective = residual @ residual
    step = np.longdouble(1.0)
    iterations = 0
    for _ in range(max_iter):
        gradient = 2.0 * (model.T @ residual)
        moved = p - _project_simplex(p - gradient)
        gradient_norm = float(np.sqrt(moved @ moved))
        if gradient_norm < gradient_tol:
            return LsFitResult(
                p_hat=PhotonNumberDistribution(p.astype(float)),
                iterations=iterations,
                objective=float(objective),
                gradient_norm=gradient_norm,
                converged=True,
            )
        step *= 1.25
        while True:
            candidate = _project_simplex(p - step * gradient)
            direction = candidate - p
            cand_residual = model @ candidate - target
            cand_objective = cand_residual @ cand_residual
            bound = (
                objective
                + gradient @ direction
                + direction @ direction / (2.0 * step)
                + np.longdouble(1e-22)
            )
            if cand_objective <= bound:
                break
            step *= 0.5
            if step < 1e-18:
                raise ReconstructionError(
                    "least-squares line search collapsed: objective "
                    f"{float(objective):.6g}, projected-gradient residual "
                    f"{gradient_norm:.3g}"
                )
        p, residual, objective = candidate, cand_residual, cand_objective
        iterations += 1
    gradient = 2.0 * (model.T @ residual)
    moved = p - _project_simplex(p - gradient)
    raise ReconstructionError(
        "least-squares fit did not converge: projected-gradient residual "
        f"{float(np.sqrt(moved @ moved)):.3g} after {max_iter} iterations "
        f"(objective {float(objective):.6g})"
    )


# ---------------------------------------------------------------------------
# likelihood and EM


def _pdf_matrix(values: np.ndarray, cutoff: int) -> np.ndarray:
    """Fock quadrature densities Q_n(x_k) as a (K, N+1) matrix."""
    matrix = np.empty((values.size, cutoff + 1))
    for n in range(cutoff + 1):
        matrix[:, n] = fock_quadrature_pdf(n, values)
    return matrix


def log_likelihood(p: PhotonNumberDistribution, data: QuadratureDataset) -> float:
    """Exactly-rounded sum of ln P(X_k) under the mixture p.

    Uses ``math.fsum``, so the result is independent of data ordering.
    """
    densities = mixture_pdf(p, data.values)
    dead = np.flatnonzero(~(densities > 0.0))
    if dead.size:
        k = int(dead[0])
        raise ReconstructionError(
            f"zero mixture density at data index {k} (x = {data.values[k]:.6g})"
        )
    return float(math.fsum(np.log(densities)))


def em_step(
    p: PhotonNumberDistribution, data: QuadratureDataset
) -> PhotonNumberDistribution:
    """One multiplicative likelihood update of the mixture weights."""
    matrix = _pdf_matrix(data.values, p.cutoff)
    denom = matrix @ p.probs
    dead = np.flatnonzero(~(denom > 0.0))
    if dead.size:
        k = int(dead[0])
        raise ReconstructionError(
            f"mixture density vanished at data index {k} (x = {data.values[k]:.6g})"
        )
    sums = (matrix / denom[:, None]).sum(axis=0)
    return PhotonNumberDistribution(p.probs * sums / data.values.size)


@dataclass(frozen=True, eq=False)
class EmResult:
    """Converged (or max-iteration) EM state with its likelihood history."""

    p_hat: PhotonNumberDistribution
    iterations: int
    final_log_likelihood: float
    converged: bool
    log_likelihood_trajectory: np.ndarray
    pinned_components: tuple[int, ...] = ()
    fisher_condition: float = float("nan")

    def __post_init__(self):
        traj = np.asarray(self.log_likelihood_trajectory, dtype=float)
        if traj.ndim != 1 or traj.size == 0:
            raise ValueError("trajectory must be a non-empty 1-d array")
        drops = np.diff(traj) < -1e-10
        if np.any(drops):
            j = int(np.flatnonzero(drops)[0])
            raise ValueError(
                f"log-likelihood decreased at iteration {j + 1}: "
                f"{traj[j]!r} -> {traj[j + 1]!r}"
            )
        if traj[-1] != self.final_log_likelihood:
            raise ValueError("final_log_likelihood must equal the last trajectory entry")
        traj = traj.copy()
        traj.flags.writeable = False
        object.__setattr__(self, "log_likelihood_trajectory", traj)

    @property
    def fisher_near_singular(self) -> bool:
        """True when the data barely constrain some weight combination."""
        return bool(self.fisher_condition > FISHER_CONDITION_LIMIT)


def _em_engine_py(matrix, p, tol, max_iter):
    """Reference EM loop; semantics identical to the compiled kernel."""
    trajectory = np.empty(max_iter + 1)
    iterations = 0
    converged = False
    for j in range(max_iter + 1):
        denom = matrix @ p
        dead = np.flatnonzero(~(denom > 0.0))
        if dead.size:
            return p, trajectory[:j], converged, iterations, int(dead[0])
        trajectory[j] = math.fsum(np.log(denom))
        if j > 0 and abs(trajectory[j] - trajectory[j - 1]) <= tol * (
            1.0 + abs(trajectory[j])
        ):
            converged = True
            return p, trajectory[: j + 1], converged, iterations, -1
        if j == max_iter:
            return p, trajectory[: j + 1], converged, iterations, -1
        sums = (matrix / denom[:, None]).sum(axis=0)
        p = p * sums / matrix.shape[0]
        p[(p != 0.0) & (p < UNDERFLOW_PIN)] = 0.0
        iterations = j + 1
    raise AssertionError("unreachable")  # pragma: no cover


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _chunked_log_sum(denoms):  # pragma: no cover - compiled
        """Sum of log(denoms): one log per 16-point product, not one per point.

        frexp keeps the exact power-of-two part of each chunk product in an
        integer, so products never underflow; the mantissa logs are summed
        with a Neumaier correction.
        """
        count = denoms.shape[0]
        total = 0.0
        carry = 0.0
        exponent = 0
        k0 = 0
        while k0 < count:
            k1 = min(k0 + 16, count)
            pr0 = 1.0
            pr1 = 1.0
            pr2 = 1.0
            pr3 = 1.0
            k = k0
            while k + 4 <= k1:
                pr0 *= denoms[k]
                pr1 *= denoms[k + 1]
                pr2 *= denoms[k + 2]
                pr3 *= denoms[k + 3]
                k += 4
            while k < k1:
                pr0 *= denoms[k]
                k += 1
            prod = (pr0 * pr1) * (pr2 * pr3)
            if prod > 0.0:
                mantissa, power = math.frexp(prod)
                term = np.log(mantissa)
                exponent += power
            else:
                # densities small enough to underflow a 16-point product;
                # take the logs one by one for this chunk
                term = 0.0
                for kk in range(k0, k1):
                    term += np.log(denoms[kk])
            fresh = total + term
            if abs(total) >= abs(term):
                carry += (total - fresh) + term
            else:
                carry += (term - fresh) + total
            total = fresh
            k0 = k1
        return total + carry + 0.6931471805599453 * exponent

    @numba.njit(cache=True)
    def _em_engine_jit(matrix, p, tol, max_iter):  # pragma: no cover - compiled
        count, comps = matrix.shape
        p = p.copy()
        trajectory = np.empty(max_iter + 1)
        sums = np.empty(comps)
        denoms = np.empty(count)
        iterations = 0
        converged = False
        for j in range(max_iter + 1):
            # Fused pass: mixture density per point feeds the update sums and
            # is buffered for the log-likelihood.
            for m in range(comps):
                sums[m] = 0.0
            for k in range(count):
                denom = 0.0
                for m in range(comps):
                    denom += matrix[k, m] * p[m]
                if not denom > 0.0:
                    return p, trajectory[:j], converged, iterations, k
                inv = 1.0 / denom
                for m in range(comps):
                    sums[m] += matrix[k, m] * inv
                denoms[k] = denom
            trajectory[j] = _chunked_log_sum(denoms)
            if j > 0 and abs(trajectory[j] - trajectory[j - 1]) <= tol * (
                1.0 + abs(trajectory[j])
            ):
                converged = True
                return p, trajectory[: j + 1], converged, iterations, -1
            if j == max_iter:
                return p, trajectory[: j + 1], converged, iterations, -1
            for m in range(comps):
                updated = p[m] * sums[m] / count
                if updated != 0.0 and updated < UNDERFLOW_PIN:
                    updated = 0.0
                p[m] = updated
            iterations = j + 1
        return p, trajectory, converged, iterations, -1  # pragma: no cover

    @numba.njit(cache=True)
    def _em_engine_jit6(matrix, p, tol, max_iter):  # pragma: no cover - compiled
        # Specialization of _em_engine_jit for six components (the default
        # five-photon cutoff).  Fixing the component count lets the update
        # sums live in registers across the whole point loop; the arithmetic
        # and its evaluation order are identical to the generic kernel.
        count = matrix.shape[0]
        q0 = matrix[:, 0]
        q1 = matrix[:, 1]
        q2 = matrix[:, 2]
        q3 = matrix[:, 3]
        q4 = matrix[:, 4]
        q5 = matrix[:, 5]
        p = p.copy()
        trajectory = np.empty(max_iter + 1)
        denoms = np.empty(count)
        scale = float(count)
        iterations = 0
        converged = False
        for j in range(max_iter + 1):
            p0 = p[0]
            p1 = p[1]
            p2 = p[2]
            p3 = p[3]
            p4 = p[4]
            p5 = p[5]
            s0 = 0.0
            s1 = 0.0
            s2 = 0.0
            s3 = 0.0
            s4 = 0.0
            s5 = 0.0
            for k in range(count):
                denom = q0[k] * p0
                denom += q1[k] * p1
                denom += q2[k] * p2
                denom += q3[k] * p3
                denom += q4[k] * p4
                denom += q5[k] * p5
                if not denom > 0.0:
                    return p, trajectory[:j], converged, iterations, k
                inv = 1.0 / denom
                s0 += q0[k] * inv
                s1 += q1[k] * inv
                s2 += q2[k] * inv
                s3 += q3[k] * inv
                s4 += q4[k] * inv
                s5 += q5[k] * inv
                denoms[k] = denom
            trajectory[j] = _chunked_log_sum(denoms)
            if j > 0 and abs(trajectory[j] - trajectory[j - 1]) <= tol * (
                1.0 + abs(trajectory[j])
            ):
                converged = True
                return p, trajectory[: j + 1], converged, iterations, -1
            if j == max_iter:
                return p, trajectory[: j + 1], converged, iterations, -1
            p[0] = p0 * s0 / scale
            p[1] = p1 * s1 / scale
            p[2] = p2 * s2 / scale
            p[3] = p3 * s3 / scale
            p[4] = p4 * s4 / scale
            p[5] = p5 * s5 / scale
            for m in range(6):
                if p[m] != 0.0 and p[m] < UNDERFLOW_PIN:
                    p[m] = 0.0
            iterations = j + 1
        return p, trajectory, converged, iterations, -1  # pragma: no cover


def _run_em(matrix, p0, tol, max_iter):
    if _HAVE_NUMBA:
        if matrix.shape[1] == 6:
            return _em_engine_jit6(matrix, p0, tol, max_iter)
        return _em_engine_jit(matrix, p0, tol, max_iter)
    return _em_engine_py(matrix, p0, tol, max_iter)


def _fisher_condition(matrix: np.ndarray, p: np.ndarray) -> float:
    """Condition number of the estimated Fisher information at p."""
    denom = matrix @ p
    scores = matrix / denom[:, None]
    info = scores.T @ scores
    try:
        return float(np.linalg.cond(info))
    except np.linalg.LinAlgError:  # pragma: no cover - cond rarely fails
        return float("inf")


def em_reconstruct(
    data: QuadratureDataset,
    cutoff: int,
    tol: float = EM_DEFAULT_TOL,
    max_iter: int = EM_DEFAULT_MAX_ITER,
) -> EmResult:
    """Maximum-likelihood mixture weights from the uniform start.

    Stops when the relative log-likelihood change drops below ``tol`` or
    after ``max_iter`` updates; hitting the cap flags ``converged = False``
    in the result instead of raising.  Components that underflow below
    ``UNDERFLOW_PIN`` are pinned to exact zero and reported.
    """
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    if not tol > 0.0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    values = data.values
    matrix = _pdf_matrix(values, cutoff)
    hopeless = np.flatnonzero(matrix.max(axis=1) <= 0.0)
    if hopeless.size:
        k = int(hopeless[0])
        raise ReconstructionError(
            f"data index {k} (x = {values[k]:.6g}) has zero density under every "
            f"Fock component up to n = {cutoff}"
        )
    start = np.full(cutoff + 1, 1.0 / (cutoff + 1))
    p, trajectory, converged, iterations, dead = _run_em(
        matrix, start, float(tol), int(max_iter)
    )
    if dead >= 0:
        raise ReconstructionError(
            f"mixture density vanished at data index {dead} "
            f"(x = {values[dead]:.6g}) during iteration {iterations}"
        )
    return EmResult(
        p_hat=PhotonNumberDistribution(p),
        iterations=iterations,
        final_log_likelihood=float(trajectory[-1]),
        converged=bool(converged),
        log_likelihood_trajectory=trajectory,
        pinned_components=tuple(int(i) for i in np.flatnonzero(p == 0.0)),
        fisher_condition=_fisher_condition(matrix, p),
    )


# ---------------------------------------------------------------------------
# JSON interface


def reconstruction_record(
    method: str,
    cutoff: int,
    p: PhotonNumberDistribution,
    log_likelihood_value: float | None,
    iterations: int,
    converged: bool,
    hist: HistogramModel,
) -> dict:
    """One serializable reconstruction result (shared LS/EM schema)."""
    return {
        "method": method,
        "cutoff": int(cutoff),
        "p": [float(v) for v in p.probs],
        "log_likelihood": None if log_likelihood_value is None else float(log_likelihood_value),
        "iterations": int(iterations),
        "converged": bool(converged),
        "histogram": {
            "edges": [float(v) for v in hist.bin_edges],
            "densities": [float(v) for v in hist.densities],
        },
    }


def write_reconstruction_json(path, records: dict, metadata: dict | None = None):
    """Write method records (e.g. {"ls": ..., "em": ...}) plus metadata."""
    import json
    from pathlib import Path

    payload = {**(metadata or {}), **records}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_reconstruction_json(path) -> dict:
    """Load a reconstruction JSON, checking the minimal expected structure."""
    import json
    from pathlib import Path

    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: invalid JSON: {exc}") from exc
    for method in ("ls", "em"):
        record = payload.get(method)
        if not isinstance(record, dict) or "p" not in record:
            raise InputFormatError(
                f"{path}: missing reconstruction record {method!r} with a 'p' field"
            )
    return payload
