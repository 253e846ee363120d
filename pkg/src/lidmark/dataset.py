"""Procedural synthetic faces with exact landmarks, plus dataset IO.

The renderer draws a parametric cartoon face whose drawing control points are
exactly the 68 template landmarks after a sampled affine jitter, so ground
truth geometry is known without any detector. Not photorealistic by design.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from ._face_template import FACE_TEMPLATE_68
from .errors import DomainBoundsError, SidecarFormatError
from .images import ImageBuffer, from_uint8, load_png
from .payload import LandmarkSet, SidecarRecord, read_sidecar

# Index ranges of the drawing primitives within the 68-point ordering.
JAW = slice(0, 17)
RIGHT_BROW = slice(17, 22)
LEFT_BROW = slice(22, 27)
NOSE_BRIDGE = slice(27, 31)
NOSE_BASE = slice(31, 36)
RIGHT_EYE = slice(36, 42)
LEFT_EYE = slice(42, 48)
MOUTH_OUTER = slice(48, 60)
MOUTH_INNER = slice(60, 68)

_FOREHEAD_STEPS = 24


@dataclass
class JitterSpec:
    """Affine perturbation magnitudes, as fractions of the canvas side."""

    translate: float = 0.06
    rotate: float = 0.06  # radians
    scale: float = 0.05


@dataclass
class SyntheticFaceParams:
    seed: int = 0
    canvas: int = 64
    jitter: JitterSpec = field(default_factory=JitterSpec)
    # (low, high) per RGB channel for the skin fill; other colors derive from it.
    skin_range: tuple[tuple[int, int], ...] = ((170, 230), (130, 190), (110, 170))

    def __post_init__(self):
        if self.canvas not in (64, 128, 256):
            raise DomainBoundsError(f"canvas side must be 64, 128 or 256, got {self.canvas}")


@dataclass
class DatasetRecord:
    image: ImageBuffer
    landmarks: LandmarkSet
    source_name: str


def _sample_affine(rng: np.random.Generator, params: SyntheticFaceParams) -> np.ndarray:
    """2x3 affine in unit coordinates around the canvas center."""
    j = params.jitter
    angle = rng.uniform(-j.rotate, j.rotate)
    scale = 1.0 + rng.uniform(-j.scale, j.scale)
    tx = rng.uniform(-j.translate, j.translate)
    ty = rng.uniform(-j.translate, j.translate)
    c, s = np.cos(angle), np.sin(angle)
    rot = scale * np.array([[c, -s], [s, c]])
    center = np.array([0.5, 0.5])
    offset = center - rot @ center + np.array([tx, ty])
    return np.hstack([rot, offset[:, None]])


def _apply_affine(points: np.ndarray, affine: np.ndarray) -> np.ndarray:
    return points @ affine[:, :2].T + affine[:, 2]


def _forehead_arc(affine: np.ndarray) -> np.ndarray:
    """Upper head outline, from the right jaw end back to the left."""
    cx, cy = 0.5, 0.48
    a, b = 0.34, 0.36
    psi = np.linspace(0.0, np.pi, _FOREHEAD_STEPS)
    arc = np.stack([cx + a * np.cos(psi), cy - b * np.sin(psi)], axis=1)
    return _apply_affine(arc, affine)


def _xy(points: np.ndarray) -> list[tuple[float, float]]:
    return [(float(x), float(y)) for x, y in points]


def generate_synthetic_face(params: SyntheticFaceParams) -> DatasetRecord:
    """Render one face; deterministic in params, landmarks exact by construction."""
    rng = np.random.default_rng(params.seed)
    s = params.canvas
    affine = _sample_affine(rng, params)
    unit_pts = _apply_affine(FACE_TEMPLATE_68, affine)
    if (unit_pts <= 0.0).any() or (unit_pts >= 1.0).any():
        raise DomainBoundsError(
            f"jitter {params.jitter} pushed landmarks outside the canvas (seed {params.seed})"
        )
    pts = unit_pts * s

    skin = tuple(int(rng.integers(lo, hi + 1)) for lo, hi in params.skin_range)
    lip = (min(skin[0] + 20, 255), max(skin[1] - 60, 0), max(skin[2] - 50, 0))
    iris = tuple(int(rng.integers(30, 140)) for _ in range(3))
    hairline = tuple(max(c - 90, 0) for c in skin)
    bg_top = tuple(int(rng.integers(40, 215)) for _ in range(3))
    bg_bot = tuple(int(rng.integers(40, 215)) for _ in range(3))

    img = Image.new("RGB", (s, s))
    draw = ImageDraw.Draw(img)
    for row in range(s):
        t = row / max(s - 1, 1)
        color = tuple(int(round(a + (b - a) * t)) for a, b in zip(bg_top, bg_bot))
        draw.line([(0, row), (s - 1, row)], fill=color)

    head = np.vstack([pts[JAW], _forehead_arc(affine) * s])
    draw.polygon(_xy(head), fill=skin, outline=hairline)

    lw = max(1, s // 64)
    for brow in (pts[RIGHT_BROW], pts[LEFT_BROW]):
        draw.line(_xy(brow), fill=hairline, width=2 * lw)
    draw.line(_xy(pts[NOSE_BRIDGE]), fill=tuple(max(c - 40, 0) for c in skin), width=lw)
    draw.line(_xy(pts[NOSE_BASE]), fill=tuple(max(c - 60, 0) for c in skin), width=lw)

    for eye in (pts[RIGHT_EYE], pts[LEFT_EYE]):
        draw.polygon(_xy(eye), fill=(245, 245, 245), outline=hairline)
        center = eye.mean(axis=0)
        r = 0.30 * (eye[:, 0].max() - eye[:, 0].min())
        draw.ellipse(
            [tuple(center - r), tuple(center + r)],
            fill=iris,
        )

    draw.polygon(_xy(pts[MOUTH_OUTER]), fill=lip, outline=tuple(max(c - 40, 0) for c in lip))
    draw.polygon(_xy(pts[MOUTH_INNER]), fill=tuple(max(c - 70, 0) for c in lip))

    rgb = np.asarray(img, dtype=np.int16)
    noise = rng.normal(0.0, 2.0, size=rgb.shape)
    rgb = np.clip(rgb + np.round(noise), 0, 255).astype(np.uint8)

    landmarks = LandmarkSet(points=pts, width=s, height=s).validate_bounds()
    return DatasetRecord(
        image=from_uint8(rgb),
        landmarks=landmarks,
        source_name=f"face_{params.seed:08d}",
    )


def generate_dataset(
    count: int, canvas: int = 64, seed: int = 0, jitter: JitterSpec | None = None
) -> list[DatasetRecord]:
    """Faces for seeds seed..seed+count-1; record i is independent of the rest."""
    jitter = jitter or JitterSpec()
    return [
        generate_synthetic_face(SyntheticFaceParams(seed=seed + i, canvas=canvas, jitter=jitter))
        for i in range(count)
    ]


def load_dataset(image_dir, sidecar) -> list[DatasetRecord]:
    """Pair sidecar records with PNG files; lexicographic order by file name."""
    image_dir = Path(image_dir)
    records = read_sidecar(sidecar)
    by_file: dict[str, SidecarRecord] = {}
    for rec in records:
        by_file[rec.file] = rec
    out = []
    for name in sorted(by_file):
        rec = by_file[name]
        path = image_dir / name
        if not path.exists():
            raise SidecarFormatError(f"image file {name!r} not found in {image_dir}")
        img = load_png(path)
        if (img.size, img.size) != (rec.landmarks.width, rec.landmarks.height):
            raise SidecarFormatError(
                f"{name!r}: sidecar says {rec.landmarks.width}x{rec.landmarks.height}, "
                f"image is {img.size}x{img.size}"
            )
        out.append(DatasetRecord(image=img, landmarks=rec.landmarks, source_name=Path(name).stem))
    return out


def split_dataset(records, fractions, seed: int):
    """Seed-deterministic disjoint (train, val, test) partition.

    Sizes use floor-then-distribute: floors of n*f, then leftover items go to
    the splits with the largest fractional remainders (earlier split on ties).
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise DomainBoundsError(f"expected 3 fractions, got {len(fractions)}")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise DomainBoundsError(f"fractions must be non-negative and sum to 1, got {fractions}")
    n = len(records)
    raw = [n * f for f in fractions]
    sizes = [int(np.floor(r)) for r in raw]
    remainders = [r - s for r, s in zip(raw, sizes)]
    for _ in range(n - sum(sizes)):
        k = int(np.argmax(remainders))
        sizes[k] += 1
        remainders[k] = -1.0
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum([0] + sizes)
    parts = tuple(
        [records[i] for i in perm[bounds[k] : bounds[k + 1]]] for k in range(3)
    )
    if n > 0 and any(s == 0 and f > 0 for s, f in zip(sizes, fractions)):
        warnings.warn("split produced an empty partition for a nonzero fraction")
    return parts


def write_dataset(records: list[DatasetRecord], out_dir, sidecar_name: str = "landmarks.jsonl"):
    """Save records as PNGs plus one JSON Lines sidecar; returns the sidecar path."""
    from .images import save_png

    out_dir = Path(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    from .payload import sidecar_line

    sidecar_path = out_dir / sidecar_name
    with open(sidecar_path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fname = f"{rec.source_name}.png"
            save_png(rec.image, out_dir / fname)
            fh.write(sidecar_line(fname, rec.landmarks) + "\n")
    return sidecar_path
