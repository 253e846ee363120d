"""Composite watermark payload: normalized landmarks plus a hashed source id.

The payload is a flat vector [landmarks ; id]: 136 normalized landmark
coordinates followed by a bipolar identifier of 16 or 32 bits derived from a
SHA-256 digest of the source name. Truncation takes the first digest bytes and
reads bits most-significant-first; bit 1 maps to +1 and bit 0 to -1. This
convention is frozen so payloads are identical across platforms and runs.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, DomainBoundsError, SidecarFormatError

NUM_LANDMARKS = 68
LANDMARK_DIM = 2 * NUM_LANDMARKS  # 136
SUPPORTED_ID_BITS = (16, 32)


@dataclass
class LandmarkSet:
    """68 ordered (x, y) points in pixel units, tied to an image size."""

    points: np.ndarray  # (68, 2) float64
    width: int
    height: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.shape != (NUM_LANDMARKS, 2):
            raise DimensionMismatchError(
                f"expected {NUM_LANDMARKS} (x, y) points, got shape {self.points.shape}"
            )
        if self.width <= 0 or self.height <= 0:
            raise DomainBoundsError(
                f"image dimensions must be positive, got {self.width}x{self.height}"
            )

    def validate_bounds(self) -> "LandmarkSet":
        x, y = self.points[:, 0], self.points[:, 1]
        # Points exactly on the border (x == width) are valid.
        if (x < 0).any() or (x > self.width).any() or (y < 0).any() or (y > self.height).any():
            bad = int(np.argmax((x < 0) | (x > self.width) | (y < 0) | (y > self.height)))
            raise DomainBoundsError(
                f"landmark {bad} at ({x[bad]}, {y[bad]}) outside {self.width}x{self.height} image"
            )
        return self


def normalize_landmarks(lm: LandmarkSet) -> np.ndarray:
    """Flatten to 136 values, x over width and y over height, each in [0, 1]."""
    lm.validate_bounds()
    scaled = lm.points / np.array([lm.width, lm.height], dtype=np.float64)
    return scaled.reshape(LANDMARK_DIM).copy()


def denormalize_landmarks(values: np.ndarray, width: int, height: int) -> LandmarkSet:
    """Inverse of normalize_landmarks for a given image size."""
    values = _check_landmark_vector(values)
    points = values.reshape(NUM_LANDMARKS, 2) * np.array([width, height], dtype=np.float64)
    return LandmarkSet(points=points, width=width, height=height)


def _check_landmark_vector(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (LANDMARK_DIM,):
        raise DimensionMismatchError(
            f"expected a flat {LANDMARK_DIM}-vector, got shape {values.shape}"
        )
    return values


def derive_source_id(name: str, id_bits: int = 16) -> np.ndarray:
    """Hash a source name to a bipolar identifier of 16 or 32 bits.

    SHA-256 over the UTF-8 bytes of ``name``; the first ceil(id_bits / 8)
    digest bytes are read most-significant-bit first.
    """
    if id_bits not in SUPPORTED_ID_BITS:
        raise DomainBoundsError(f"id_bits must be one of {SUPPORTED_ID_BITS}, got {id_bits}")
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    nbytes = math.ceil(id_bits / 8)
    bits = np.unpackbits(np.frombuffer(digest[:nbytes], dtype=np.uint8))[:id_bits]
    return (bits.astype(np.int8) * 2 - 1)


def source_id_for_file(path, id_bits: int = 16) -> np.ndarray:
    """Identifier for an image file: hash of the bare stem (no dir, no suffix)."""
    return derive_source_id(Path(path).stem, id_bits)


def check_source_id(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.ndim != 1 or bits.shape[0] not in SUPPORTED_ID_BITS:
        raise DimensionMismatchError(
            f"identifier must be a flat vector of {SUPPORTED_ID_BITS} bits, got shape {bits.shape}"
        )
    if not np.isin(bits, (-1, 1)).all():
        raise DomainBoundsError("identifier components must be exactly -1 or +1")
    return bits.astype(np.int8)


def id_to_hex(bits: np.ndarray) -> str:
    """Hex encoding of a bipolar identifier, bit +1 -> 1, MSB first."""
    bits = check_source_id(bits)
    as01 = ((bits + 1) // 2).astype(np.uint8)
    packed = np.packbits(as01)
    return packed.tobytes().hex()


def hex_to_id(id_hex: str, id_bits: int) -> np.ndarray:
    if id_bits not in SUPPORTED_ID_BITS:
        raise DomainBoundsError(f"id_bits must be one of {SUPPORTED_ID_BITS}, got {id_bits}")
    if len(id_hex) * 4 != id_bits:
        raise DimensionMismatchError(
            f"hex string {id_hex!r} does not encode {id_bits} bits"
        )
    raw = bytes.fromhex(id_hex)
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:id_bits]
    return (bits.astype(np.int8) * 2 - 1)


def compose_payload(landmark_vec: np.ndarray, id_bits: np.ndarray) -> np.ndarray:
    """Concatenate [landmarks ; id] into one flat float vector."""
    landmark_vec = _check_landmark_vector(landmark_vec)
    id_bits = check_source_id(id_bits)
    return np.concatenate([landmark_vec, id_bits.astype(np.float64)])


def split_payload(payload: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a flat payload back into (landmark vector, bipolar id)."""
    payload = np.asarray(payload, dtype=np.float64)
    if payload.ndim != 1 or payload.shape[0] - LANDMARK_DIM not in SUPPORTED_ID_BITS:
        raise DimensionMismatchError(
            f"payload length must be 136 + {SUPPORTED_ID_BITS}, got shape {payload.shape}"
        )
    landmark_vec = payload[:LANDMARK_DIM].copy()
    id_bits = check_source_id(payload[LANDMARK_DIM:].astype(np.int8))
    return landmark_vec, id_bits


# --- landmark sidecar (JSON Lines, shared with the dataset and exporter) ---


@dataclass
class SidecarRecord:
    file: str
    landmarks: LandmarkSet


def parse_sidecar_record(obj: dict, line: int | None = None) -> SidecarRecord:
    """Validate one sidecar object: {"file", "width", "height", "points"}."""
    for key in ("file", "width", "height", "points"):
        if key not in obj:
            raise SidecarFormatError(f"missing key {key!r}", line)
    if not isinstance(obj["file"], str) or not obj["file"]:
        raise SidecarFormatError("'file' must be a non-empty string", line)
    try:
        width, height = int(obj["width"]), int(obj["height"])
    except (TypeError, ValueError):
        raise SidecarFormatError("'width'/'height' must be integers", line) from None
    points = obj["points"]
    if not isinstance(points, list) or len(points) != NUM_LANDMARKS:
        raise SidecarFormatError(
            f"'points' must list exactly {NUM_LANDMARKS} [x, y] pairs, got {len(points) if isinstance(points, list) else type(points).__name__}",
            line,
        )
    try:
        arr = np.asarray(points, dtype=np.float64)
    except ValueError:
        raise SidecarFormatError("'points' entries must be numeric pairs", line) from None
    if arr.shape != (NUM_LANDMARKS, 2):
        raise SidecarFormatError(f"'points' has shape {arr.shape}, expected (68, 2)", line)
    try:
        lm = LandmarkSet(points=arr, width=width, height=height).validate_bounds()
    except (DimensionMismatchError, DomainBoundsError) as exc:
        raise SidecarFormatError(str(exc), line) from None
    return SidecarRecord(file=obj["file"], landmarks=lm)


def read_sidecar(path) -> list[SidecarRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SidecarFormatError(f"invalid JSON: {exc.msg}", line_no) from None
            records.append(parse_sidecar_record(obj, line_no))
    return records


def sidecar_line(file: str, lm: LandmarkSet) -> str:
    obj = {
        "file": file,
        "width": int(lm.width),
        "height": int(lm.height),
        "points": [[float(x), float(y)] for x, y in lm.points],
    }
    return json.dumps(obj, sort_keys=True)


def write_sidecar(records: list[SidecarRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(sidecar_line(rec.file, rec.landmarks) + "\n")
