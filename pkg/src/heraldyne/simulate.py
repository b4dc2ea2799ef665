"""Synthesis of segmented homodyne records around heralding triggers.

Each trigger yields one segment of raw detector samples.  A segment hides a
single quadrature value ``x`` of the heralded state inside one temporal mode
``f`` on top of white background noise:

    s_i = signal_gain * x * f_i + n_perp_i,

where ``n_perp`` is Gaussian noise with its projection onto ``f`` removed.
The construction makes the mode-weighted sum recover ``signal_gain * x``
exactly, while the per-sample variance trace keeps the familiar shape

    V(tau) = kappa'^2 f(tau)^2 + V0,

so the downstream pipeline sees statistics equivalent to a real acquisition:
segments with a blocked signal port carry vacuum, heralded segments carry
the photon-number mixture ``true_p``.

Randomness is organized for reproducibility: every segment draws from its
own substream keyed by ``(rng_seed, kind, segment_index)``, so batches are
bit-identical regardless of generation order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fock import PhotonNumberDistribution, fock_quadrature_pdf, fock_variance
from .pipeline import ModeFunction

__all__ = [
    "DEFAULT_DECAY_RATE",
    "DEFAULT_TRUE_P",
    "DoubleExponential",
    "GaussianPulse",
    "SimulationConfig",
    "Segment",
    "SegmentBatch",
    "synth_mode_function",
    "sample_quadrature",
    "generate_segment",
    "generate_batch",
]

#: Field-amplitude decay rate (1/s) of a Lorentzian emission line with
#: 120 MHz full width at half maximum: gamma = 2*pi*FWHM/2.
DEFAULT_DECAY_RATE = math.pi * 120e6

#: Default heralded photon statistics: a single-photon-dominant mixture
#: (57% one photon, 39% vacuum from false triggers and losses, a few
#: percent of higher terms) — the toolkit's end-to-end benchmark state.
DEFAULT_TRUE_P = (0.392, 0.572, 0.003, 0.028, 0.004, 0.001)

_VACUUM = PhotonNumberDistribution(np.array([1.0]))

KIND_VACUUM = "vacuum"
KIND_HERALDED = "heralded"

#: Substream tags keep vacuum segments, heralded segments, and any other
#: consumer of the same user seed statistically independent.
_KIND_TAGS = {KIND_VACUUM: 0, KIND_HERALDED: 1}

_SQRT_TWO_PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class DoubleExponential:
    """Two-sided exponential amplitude envelope exp(-decay_rate*|t - peak|)."""

    decay_rate: float = DEFAULT_DECAY_RATE

    def __post_init__(self):
        if not (math.isfinite(self.decay_rate) and self.decay_rate > 0.0):
            raise ValueError(f"decay_rate must be positive, got {self.decay_rate!r}")

    def amplitude(self, dt: np.ndarray) -> np.ndarray:
        return np.exp(-self.decay_rate * np.abs(dt))

    def to_dict(self) -> dict:
        return {"kind": "double_exponential", "decay_rate": self.decay_rate}


@dataclass(frozen=True)
class GaussianPulse:
    """Gaussian amplitude envelope with standard deviation ``width`` seconds."""

    width: float

    def __post_init__(self):
        if not (math.isfinite(self.width) and self.width > 0.0):
            raise ValueError(f"width must be positive, got {self.width!r}")

    def amplitude(self, dt: np.ndarray) -> np.ndarray:
        return np.exp(-0.5 * (dt / self.width) ** 2)

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "width": self.width}


#: Supported temporal-mode envelope shapes.
ModeShape = DoubleExponential | GaussianPulse


def mode_shape_from_dict(spec: dict) -> ModeShape:
    """Inverse of ``ModeShape.to_dict`` (used by config files and sidecars)."""
    try:
        kind = spec["kind"]
    except (TypeError, KeyError):
        raise ValueError(f"mode shape spec needs a 'kind' key, got {spec!r}") from None
    if kind == "double_exponential":
        return DoubleExponential(float(spec.get("decay_rate", DEFAULT_DECAY_RATE)))
    if kind == "gaussian":
        if "width" not in spec:
            raise ValueError("gaussian mode shape requires a 'width'")
        return GaussianPulse(float(spec["width"]))
    raise ValueError(f"unknown mode shape kind {kind!r}")


@dataclass(frozen=True)
class SimulationConfig:
    """Full description of one synthetic acquisition run.

    ``segments`` is the trigger count K; the raw per-sample noise variance
    ``background_variance`` (V0) and the quadrature-to-instrument gain
    ``signal_gain`` (kappa) are in arbitrary instrument units.  The trigger
    sits at sample index ``samples_per_segment // 2`` and the mode peaks
    ``peak_offset`` seconds relative to it (negative = earlier).
    """

    true_p: PhotonNumberDistribution
    segments: int
    samples_per_segment: int = 1000
    sample_interval: float = 0.5e-9
    mode_shape: ModeShape = DoubleExponential()
    peak_offset: float = -10e-9
    background_variance: float = 1.0
    signal_gain: float = 25.0
    rng_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.true_p, PhotonNumberDistribution):
            raise ValueError("true_p must be a PhotonNumberDistribution")
        if self.segments < 1:
            raise ValueError(f"segments must be >= 1, got {self.segments}")
        if self.samples_per_segment < 16:
            raise ValueError(
                f"samples_per_segment must be >= 16, got {self.samples_per_segment}"
            )
        if not (math.isfinite(self.sample_interval) and self.sample_interval > 0.0):
            raise ValueError(f"sample_interval must be positive, got {self.sample_interval!r}")
        if not isinstance(self.mode_shape, (DoubleExponential, GaussianPulse)):
            raise ValueError(f"unsupported mode shape {self.mode_shape!r}")
        if not (math.isfinite(self.background_variance) and self.background_variance > 0.0):
            raise ValueError("background_variance must be positive")
        if not (math.isfinite(self.signal_gain) and self.signal_gain > 0.0):
            raise ValueError("signal_gain must be positive")
        half_span = self.samples_per_segment * self.sample_interval / 2.0
        if not abs(self.peak_offset) < half_span:
            raise ValueError(
                f"|peak_offset| = {abs(self.peak_offset):g} s must be below "
                f"half the segment span {half_span:g} s"
            )
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError("rng_seed must fit an unsigned 64-bit integer")

    @property
    def trigger_index(self) -> int:
        """Sample index of the trigger time tau = 0 (center of the segment)."""
        return self.samples_per_segment // 2

    @property
    def sample_times(self) -> np.ndarray:
        """Time offsets (seconds) of each sample relative to the trigger."""
        idx = np.arange(self.samples_per_segment, dtype=float)
        return (idx - self.trigger_index) * self.sample_interval

    def to_dict(self) -> dict:
        return {
            "true_p": [float(v) for v in self.true_p.probs],
            "segments": int(self.segments),
            "samples_per_segment": int(self.samples_per_segment),
            "sample_interval": float(self.sample_interval),
            "mode_shape": self.mode_shape.to_dict(),
            "peak_offset": float(self.peak_offset),
            "background_variance": float(self.background_variance),
            "signal_gain": float(self.signal_gain),
            "rng_seed": int(self.rng_seed),
        }

    def fingerprint(self) -> str:
        """SHA-256 over the canonical JSON form of this config."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("ascii")).hexdigest()


@dataclass(frozen=True, eq=False)
class Segment:
    """One trigger's worth of raw samples; trigger time sits at trigger_index."""

    samples: np.ndarray
    trigger_index: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("samples must be a non-empty 1-d array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        if not 0 <= int(self.trigger_index) < arr.size:
            raise ValueError(
                f"trigger_index {self.trigger_index} outside [0, {arr.size})"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "trigger_index", int(self.trigger_index))


@dataclass(frozen=True, eq=False)
class SegmentBatch:
    """A stack of same-shape segments plus provenance.

    ``samples`` is (segment, sample-index); every segment shares the same
    ``trigger_index``.  Behaves as a sequence of :class:`Segment`.
    """

    samples: np.ndarray
    trigger_index: int
    kind: str
    config_fingerprint: str | None = None

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError("samples must be a non-empty 2-d array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        if self.kind not in _KIND_TAGS:
            raise ValueError(f"kind must be one of {sorted(_KIND_TAGS)}, got {self.kind!r}")
        if not 0 <= int(self.trigger_index) < arr.shape[1]:
            raise ValueError(
                f"trigger_index {self.trigger_index} outside [0, {arr.shape[1]})"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "trigger_index", int(self.trigger_index))

    @property
    def segment_length(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __getitem__(self, index: int) -> Segment:
        return Segment(self.samples[index], self.trigger_index)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def synth_mode_function(config: SimulationConfig) -> ModeFunction:
    """Discrete temporal mode weights on the segment's sample grid.

    The configured envelope is evaluated at each sample time relative to
    ``peak_offset`` and normalized so the weights have unit sum of squares.
    """
    dt = config.sample_times - config.peak_offset
    weights = config.mode_shape.amplitude(dt)
    weights = weights / math.sqrt(float(weights @ weights))
    return ModeFunction(weights=weights, peak_index=int(np.argmax(weights)))


@lru_cache(maxsize=None)
@lru_cache(maxsize=None)
def _rejection_bound(n: int) -> float:
    """Envelope constant M_n with Q_n(x) <= M_n * N(0, (2n+1)/2)(x) everywhere.

    The ratio is smooth and decays in the tails (the Gaussian envelope is
    wider than Q_n's effective support), so a dense scan of the positive
    axis with a small safety factor bounds it reliably.
    """
    sigma = math.sqrt(fock_variance(n))
    x = np.linspace(0.0, math.sqrt(2.0 * n + 1.0) + 8.0, 20001)
    target = fock_quadrature_pdf(n, x)
    envelope = np.exp(-0.5 * (x / sigma) ** 2) / (sigma * _SQRT_TWO_PI)
    return float(np.max(target / envelope)) * 1.0001


def _sample_fock_quadrature(n: int, rng: np.random.Generator) -> float:
    """Draw one x ~ Q_n by rejection against the matched-variance Gaussian."""
    sigma = math.sqrt(fock_variance(n))
    bound = _rejection_bound(n)
    while True:
        x = sigma * rng.standard_normal()
        envelope = math.exp(-0.5 * (x / sigma) ** 2) / (sigma * _SQRT_TWO_PI)
        if rng.random() * bound * envelope <= fock_quadrature_pdf(n, x):
            return x


def _sample_fock_batch(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` values from Q_n with the same envelope as the scalar path."""
    sigma = math.sqrt(fock_variance(n))
    bound = _rejection_bound(n)
    out = np.empty(count)
    filled = 0
    while filled < count:
        # acceptance rate is 1/bound; over-propose so one pass usually suffices
        proposals = max(int((count - filled) * bound * 1.2) + 16, 64)
        x = sigma * rng.standard_normal(proposals)
        envelope = np.exp(-0.5 * (x / sigma) ** 2) / (sigma * _SQRT_TWO_PI)
        kept = x[rng.random(proposals) * bound * envelope <= fock_quadrature_pdf(n, x)]
        take = min(kept.size, count - filled)
        out[filled : filled + take] = kept[:take]
        filled += take
    return out


def sample_quadrature(
    p: PhotonNumberDistribution,
    rng: np.random.Generator,
    size: int | None = None,
):
    """Draw from the phase-averaged mixture sum p_n Q_n.

    Draws the photon number first, then the quadrature within that Fock
    component, so the output density is the mixture exactly.  With ``size``
    given, returns that many draws as an array (component counts follow one
    multinomial, each component is rejection-sampled in bulk, and the result
    is shuffled); the scalar and batched paths consume the generator
    differently but both are deterministic given its state.
    """
    if size is not None:
        if size < 0:
            raise ValueError(f"size must be >= 0, got {size}")
        counts = rng.multinomial(int(size), p.probs)
        chunks = [
            _sample_fock_batch(n, int(count), rng)
            for n, count in enumerate(counts)
            if count > 0
        ]
        values = np.concatenate(chunks) if chunks else np.empty(0)
        return rng.permutation(values)
    u = rng.random()
    n = int(np.searchsorted(np.cumsum(p.probs), u, side="right"))
    if n > p.cutoff:  # guard against cumulative sum rounding below 1
        n = p.cutoff
    return _sample_fock_quadrature(n, rng)


def generate_segment(
    x: float,
    mode: ModeFunction,
    config: SimulationConfig,
    rng: np.random.Generator,
) -> Segment:
    """Embed one quadrature value into a noisy segment.

    The background noise has its projection onto the mode removed before the
    signal is added, so projecting the segment back onto the mode returns
    ``signal_gain * x`` to machine precision while every orthogonal temporal
    mode sees untouched white noise.
    """
    f = mode.weights
    if f.size != config.samples_per_segment:
        raise ValueError(
            f"mode length {f.size} does not match samples_per_segment "
            f"{config.samples_per_segment}"
        )
    noise = rng.normal(0.0, math.sqrt(config.background_variance), f.size)
    noise -= (f @ noise) * f
    samples = config.signal_gain * float(x) * f + noise
    return Segment(samples=samples, trigger_index=config.trigger_index)


def _segment_rng(seed: int, kind: str, index: int) -> np.random.Generator:
    """Independent substream for one segment of one batch kind."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_KIND_TAGS[kind], index))
    return np.random.default_rng(ss)


def generate_batch(config: SimulationConfig, kind: str) -> SegmentBatch:
    """Generate a full batch of segments of the requested kind.

    Vacuum batches embed quadratures drawn from Q_0 (signal port blocked);
    heralded batches draw from the configured mixture.  Each segment uses
    its own substream of ``rng_seed``, making the output independent of
    generation order and bit-identical across runs.
    """
    if kind not in _KIND_TAGS:
        raise ValueError(f"kind must be one of {sorted(_KIND_TAGS)}, got {kind!r}")
    mode = synth_mode_function(config)
    p = config.true_p if kind == KIND_HERALDED else _VACUUM
    rows = np.empty((config.segments, config.samples_per_segment))
    for i in range(config.segments):
        rng = _segment_rng(config.rng_seed, kind, i)
        x = sample_quadrature(p, rng)
        rows[i] = generate_segment(x, mode, config, rng).samples
    return SegmentBatch(
        samples=rows,
        trigger_index=config.trigger_index,
        kind=kind,
        config_fingerprint=config.fingerprint(),
    )
