"""Temporal-mode recovery and quadrature calibration.

The analysis chain mirrors how segmented homodyne data are actually
processed: heralded segments show excess variance localized in time,

    V(tau) = kappa'^2 f(tau)^2 + V0,

so the mode function is read off as f ~ sqrt(V - V0) (clipped at zero,
normalized), segments are projected onto it, and vacuum projections pin
the scale so that the calibrated vacuum variance is exactly 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .errors import DegenerateDataError, InputFormatError, NoSignalError

if TYPE_CHECKING:  # pragma: no cover - type hints only, avoids an import cycle
    from .simulate import SegmentBatch

__all__ = [
    "ModeFunction",
    "VarianceTrace",
    "QuadratureDataset",
    "compute_variance_trace",
    "extract_mode_function",
    "project_quadratures",
    "calibrate",
    "write_mode_csv",
    "write_variance_csv",
    "write_quadrature_csv",
    "read_quadrature_csv",
]

#: Vacuum quadrature variance in calibrated units.
VACUUM_VARIANCE = 0.5


@dataclass(frozen=True, eq=False)
class ModeFunction:
    """Nonnegative temporal-mode weights with unit sum of squares."""

    weights: np.ndarray
    peak_index: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0.0):
            raise ValueError("weights must be non-negative")
        norm2 = float(w @ w)
        if abs(norm2 - 1.0) > 1e-9:
            raise ValueError(f"sum of squared weights must be 1 within 1e-9, got {norm2!r}")
        if int(self.peak_index) != int(np.argmax(w)):
            raise ValueError("peak_index must point at the largest weight")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "peak_index", int(self.peak_index))


@dataclass(frozen=True, eq=False)
class VarianceTrace:
    """Per-sample-index variance across segments, with its flat baseline."""

    variance: np.ndarray
    baseline: float
    count: int

    def __post_init__(self):
        v = np.asarray(self.variance, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("variance must be a non-empty 1-d array")
        if not np.all(np.isfinite(v)):
            raise ValueError("variance must be finite")
        if np.any(v < 0.0):
            raise ValueError("variance must be non-negative")
        if not (math.isfinite(self.baseline) and self.baseline > 0.0):
            raise ValueError(f"baseline must be positive, got {self.baseline!r}")
        if int(self.count) < 2:
            raise ValueError("count must be >= 2")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "variance", v)
        object.__setattr__(self, "baseline", float(self.baseline))
        object.__setattr__(self, "count", int(self.count))


@dataclass(frozen=True, eq=False)
class QuadratureDataset:
    """Calibrated quadrature samples (vacuum variance = 1/2 units)."""

    values: np.ndarray
    calibration_scale: float
    source_kind: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("values must be a non-empty 1-d array")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        if not (math.isfinite(self.calibration_scale) and self.calibration_scale > 0.0):
            raise ValueError("calibration_scale must be positive")
        if self.source_kind not in ("vacuum", "heralded"):
            raise ValueError(f"unknown source_kind {self.source_kind!r}")
        if self.source_kind == "vacuum":
            if v.size < 2:
                raise ValueError("a vacuum dataset needs at least 2 values")
            # A calibrated vacuum batch must sit at variance 1/2 within three
            # standard errors of a variance estimate, SE = 0.5*sqrt(2/(n-1)).
            var = float(np.var(v, ddof=1))
            se = VACUUM_VARIANCE * math.sqrt(2.0 / (v.size - 1))
            if abs(var - VACUUM_VARIANCE) > 3.0 * se:
                raise ValueError(
                    f"vacuum dataset variance {var:.6g} deviates from "
                    f"{VACUUM_VARIANCE} by more than 3 standard errors ({se:.2g})"
                )
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "calibration_scale", float(self.calibration_scale))

    def __len__(self) -> int:
        return self.values.size


def compute_variance_trace(
    batch: "SegmentBatch", baseline_window_fraction: float = 0.1
) -> VarianceTrace:
    """Unbiased per-index sample variance plus an edge-window baseline.

    The baseline V0 is the mean of the variance over the first and last
    ``ceil(fraction * length)`` indices — far from the trigger the trace is
    asymptotically flat background.
    """
    if not 0.0 < baseline_window_fraction <= 0.4:
        raise ValueError(
            f"baseline_window_fraction must lie in (0, 0.4], got {baseline_window_fraction!r}"
        )
    if len(batch) < 2:
        raise DegenerateDataError("variance needs at least 2 segments")
    variance = batch.samples.var(axis=0, ddof=1)
    flat = np.flatnonzero(variance == 0.0)
    if flat.size:
        raise DegenerateDataError(
            f"all segments are identical at sample index {int(flat[0])}"
        )
    window = math.ceil(baseline_window_fraction * variance.size)
    baseline = float(np.mean(np.concatenate([variance[:window], variance[-window:]])))
    return VarianceTrace(variance=variance, baseline=baseline, count=len(batch))


def extract_mode_function(
    trace: VarianceTrace, detection_sigma: float = 5.0
) -> ModeFunction:
    """Recover the temporal mode as sqrt(V - V0), clipped and normalized.

    Indices where the variance does not exceed the baseline map to exactly
    zero weight.  ``detection_sigma`` sets the minimum peak excess, in units
    of the baseline estimate's statistical error sqrt(2/(count-1))*V0,
    required to accept that a mode is present at all; 0 accepts any excess.
    """
    if detection_sigma < 0.0:
        raise ValueError("detection_sigma must be >= 0")
    noise_floor = trace.baseline * math.sqrt(2.0 / (trace.count - 1))
    threshold = trace.baseline + detection_sigma * noise_floor
    if not float(np.max(trace.variance)) > threshold:
        raise NoSignalError(
            "no sample index rises above the variance baseline "
            f"({trace.baseline:.6g} + {detection_sigma:g} sigma)"
        )
    excess = trace.variance - trace.baseline
    weights = np.sqrt(np.clip(excess, 0.0, None))
    weights /= math.sqrt(float(weights @ weights))
    return ModeFunction(weights=weights, peak_index=int(np.argmax(weights)))


def project_quadratures(batch: "SegmentBatch", mode: ModeFunction) -> np.ndarray:
    """Raw quadrature per segment: the mode-weighted sum of its samples."""
    if mode.weights.size != batch.segment_length:
        raise ValueError(
            f"mode length {mode.weights.size} does not match segment length "
            f"{batch.segment_length}"
        )
    return batch.samples @ mode.weights


def calibrate(
    vacuum_raw: np.ndarray, signal_raw: np.ndarray
) -> tuple[QuadratureDataset, QuadratureDataset]:
    """Scale raw projections so the vacuum batch has variance exactly 1/2.

    The scale comes from the vacuum batch alone; the heralded batch never
    influences its own normalization.
    """
    vac = np.asarray(vacuum_raw, dtype=float)
    sig = np.asarray(signal_raw, dtype=float)
    if vac.size < 100:
        raise DegenerateDataError(
            f"calibration needs >= 100 vacuum projections, got {vac.size}"
        )
    variance = float(np.var(vac, ddof=1))
    if variance <= 0.0:
        raise DegenerateDataError("vacuum projections have zero variance")
    scale = math.sqrt(variance / VACUUM_VARIANCE)
    return (
        QuadratureDataset(vac / scale, scale, "vacuum"),
        QuadratureDataset(sig / scale, scale, "heralded"),
    )


# ---------------------------------------------------------------------------
# CSV formats


def _write_comments(handle, metadata: dict | None):
    for key, value in (metadata or {}).items():
        handle.write(f"# {key} = {value}\n")


def write_mode_csv(
    path,
    mode: ModeFunction,
    sample_interval: float,
    trigger_index: int,
    metadata: dict | None = None,
) -> None:
    """Two-column CSV: time offset from the trigger (s), mode weight."""
    path = Path(path)
    times = (np.arange(mode.weights.size) - trigger_index) * sample_interval
    with path.open("w") as fh:
        _write_comments(fh, {"peak_index": mode.peak_index, **(metadata or {})})
        fh.write("time_offset_s,weight\n")
        for t, w in zip(times, mode.weights):
            fh.write(f"{t:.17g},{w:.17g}\n")


def write_variance_csv(
    path,
    trace: VarianceTrace,
    sample_interval: float,
    trigger_index: int,
    metadata: dict | None = None,
) -> None:
    """Two-column CSV of the variance trace, with baseline in the header."""
    path = Path(path)
    times = (np.arange(trace.variance.size) - trigger_index) * sample_interval
    with path.open("w") as fh:
        _write_comments(
            fh,
            {"baseline": repr(trace.baseline), "count": trace.count, **(metadata or {})},
        )
        fh.write("time_offset_s,variance\n")
        for t, v in zip(times, trace.variance):
            fh.write(f"{t:.17g},{v:.17g}\n")


def write_quadrature_csv(
    path, dataset: QuadratureDataset, metadata: dict | None = None
) -> None:
    """One calibrated value per line; scale and source kind in comments."""
    path = Path(path)
    with path.open("w") as fh:
        _write_comments(
            fh,
            {
                "source_kind": dataset.source_kind,
                "calibration_scale": repr(dataset.calibration_scale),
                **(metadata or {}),
            },
        )
        for value in dataset.values:
            fh.write(f"{value:.17g}\n")


def read_quadrature_csv(path) -> QuadratureDataset:
    """Parse a quadrature CSV written by :func:`write_quadrature_csv`."""
    path = Path(path)
    header: dict[str, str] = {}
    values: list[float] = []
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                header[key.strip()] = value.strip()
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise InputFormatError(
                f"{path}:{lineno}: expected a number, got {line!r}"
            ) from None
    if "source_kind" not in header or "calibration_scale" not in header:
        raise InputFormatError(
            f"{path}: missing required header comments "
            "(source_kind, calibration_scale)"
        )
    if not values:
        raise InputFormatError(f"{path}: no data lines")
    try:
        scale = float(header["calibration_scale"])
    except ValueError:
        raise InputFormatError(
            f"{path}: calibration_scale is not a number: "
            f"{header['calibration_scale']!r}"
        ) from None
    try:
        return QuadratureDataset(
            np.asarray(values), scale, header["source_kind"]
        )
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc
