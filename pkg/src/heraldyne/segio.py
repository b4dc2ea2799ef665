"""On-disk formats for segment batches.

Binary layout (all little-endian):

    offset  size  field
    0       4     magic "HSEG"
    4       2     format version (u16, currently 1)
    6       1     batch kind (u8: 0 = vacuum, 1 = heralded)
    7       9     reserved (zero)
    16      4     segment count (u32)
    20      4     samples per segment (u32)
    24      4     trigger index (u32)
    28      ...   samples as float32, segment-major

A sidecar JSON file (``<name>.hseg.json``) carries the generating config
echo and its fingerprint; reading works without it, but provenance fields
are then unavailable.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import InputFormatError
from .simulate import SegmentBatch, SimulationConfig

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "sidecar_path",
    "write_batch",
    "read_batch",
    "write_batch_csv",
]

MAGIC = b"HSEG"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHB9x")
_COUNTS = struct.Struct("<III")

_KIND_CODES = {"vacuum": 0, "heralded": 1}
_CODE_KINDS = {code: kind for kind, code in _KIND_CODES.items()}


def sidecar_path(path) -> Path:
    """Metadata JSON sits next to the binary as ``<name>.json``."""
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_batch(path, batch: SegmentBatch, config: SimulationConfig | None = None) -> Path:
    """Write a batch plus its JSON sidecar; returns the binary path.

    Samples are stored as float32 — matching the effective precision of a
    digitizer while halving the file size.
    """
    path = Path(path)
    payload = np.ascontiguousarray(batch.samples, dtype="<f4")
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, _KIND_CODES[batch.kind]))
        fh.write(
            _COUNTS.pack(len(batch), batch.segment_length, batch.trigger_index)
        )
        fh.write(payload.tobytes())
    meta = {
        "format": {"magic": MAGIC.decode("ascii"), "version": FORMAT_VERSION},
        "kind": batch.kind,
        "segments": len(batch),
        "samples_per_segment": batch.segment_length,
        "trigger_index": batch.trigger_index,
        "config_fingerprint": batch.config_fingerprint,
        "config": config.to_dict() if config is not None else None,
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_batch(path) -> SegmentBatch:
    """Read a batch written by :func:`write_batch`.

    Raises :class:`InputFormatError` on bad magic, unsupported version,
    unknown kind, or a payload that does not match the declared shape.
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _HEADER.size + _COUNTS.size:
        raise InputFormatError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, kind_code = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise InputFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise InputFormatError(
            f"{path}: unsupported format version {version} (supported: {FORMAT_VERSION})"
        )
    if kind_code not in _CODE_KINDS:
        raise InputFormatError(f"{path}: unknown batch kind code {kind_code}")
    count, length, trigger = _COUNTS.unpack_from(blob, _HEADER.size)
    offset = _HEADER.size + _COUNTS.size
    expected = count * length * 4
    if len(blob) - offset != expected:
        raise InputFormatError(
            f"{path}: payload is {len(blob) - offset} bytes, expected {expected} "
            f"({count} segments x {length} samples x 4)"
        )
    if count == 0 or length == 0:
        raise InputFormatError(f"{path}: empty batch ({count} x {length})")
    samples = (
        np.frombuffer(blob, dtype="<f4", count=count * length, offset=offset)
        .astype(float)
        .reshape(count, length)
    )
    if not np.all(np.isfinite(samples)):
        raise InputFormatError(f"{path}: payload contains non-finite samples")
    fingerprint = None
    meta_file = sidecar_path(path)
    if meta_file.exists():
        try:
            meta = json.loads(meta_file.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputFormatError(f"cannot parse sidecar {meta_file}: {exc}") from exc
        fingerprint = meta.get("config_fingerprint")
    try:
        return SegmentBatch(
            samples=samples,
            trigger_index=trigger,
            kind=_CODE_KINDS[kind_code],
            config_fingerprint=fingerprint,
        )
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc


def read_sidecar(path) -> dict | None:
    """Metadata dict for a batch file, or None when no sidecar exists."""
    meta_file = sidecar_path(path)
    if not meta_file.exists():
        return None
    try:
        return json.loads(meta_file.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputFormatError(f"cannot parse sidecar {meta_file}: {exc}") from exc


def write_batch_csv(path, batch: SegmentBatch) -> Path:
    """Inspection dump: one segment per row, float32-exact decimal values."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"# kind = {batch.kind}\n")
        fh.write(f"# trigger_index = {batch.trigger_index}\n")
        for row in batch.samples:
            fh.write(",".join(f"{v:.9g}" for v in row))
            fh.write("\n")
    return path
