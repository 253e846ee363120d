#!/usr/bin/env python3
"""Regenerate src/lidmark/_face_template.py.

The canonical face template is a fixed table of 68 (x, y) control points in
unit coordinates following the standard 68-point ordering: jaw 0-16,
right brow 17-21, left brow 22-26, nose 27-35, right eye 36-41, left eye
42-47, mouth 48-67. "Right"/"left" are the subject's sides, so the right eye
sits on the viewer's left (smaller x). The same points double as drawing
control points for the synthetic face renderer.
"""

from pathlib import Path

import numpy as np

HEAD_CENTER = (0.5, 0.48)
HEAD_AXES = (0.34, 0.40)


def _jaw() -> list[tuple[float, float]]:
    cx, cy = HEAD_CENTER
    a, b = HEAD_AXES
    pts = []
    for i in range(17):
        phi = np.pi - i * np.pi / 16.0
        pts.append((cx + a * np.cos(phi), cy + b * np.sin(phi)))
    return pts


def _brow(x0: float, x1: float) -> list[tuple[float, float]]:
    xs = np.linspace(x0, x1, 5)
    ys = 0.355 - 0.020 * np.sin(np.linspace(0.0, np.pi, 5))
    return list(zip(xs, ys))


def _nose() -> list[tuple[float, float]]:
    bridge = [(0.5, y) for y in np.linspace(0.42, 0.56, 4)]
    base = [(0.43, 0.600), (0.465, 0.615), (0.5, 0.625), (0.535, 0.615), (0.57, 0.600)]
    return bridge + base


def _eye(cx: float, mirror: bool) -> list[tuple[float, float]]:
    w, h, cy = 0.062, 0.028, 0.42
    pts = [
        (cx - w, cy),
        (cx - w / 3, cy - h),
        (cx + w / 3, cy - h),
        (cx + w, cy),
        (cx + w / 3, cy + h),
        (cx - w / 3, cy + h),
    ]
    if mirror:
        # Keep corner semantics: index 0 is the corner nearest the nose for
        # the left eye (point 42) but nearest the ear for the right (36).
        pts = [(2 * cx - x, y) for x, y in pts]
        pts = [pts[0], pts[1], pts[2], pts[3], pts[4], pts[5]]
    return pts


def _mouth() -> list[tuple[float, float]]:
    outer = [
        (0.375, 0.740),
        (0.425, 0.712),
        (0.465, 0.700),
        (0.500, 0.705),
        (0.535, 0.700),
        (0.575, 0.712),
        (0.625, 0.740),
        (0.575, 0.772),
        (0.535, 0.785),
        (0.500, 0.788),
        (0.465, 0.785),
        (0.425, 0.772),
    ]
    inner = [
        (0.410, 0.740),
        (0.460, 0.728),
        (0.500, 0.730),
        (0.540, 0.728),
        (0.590, 0.740),
        (0.540, 0.755),
        (0.500, 0.758),
        (0.460, 0.755),
    ]
    return outer + inner


def build_template() -> np.ndarray:
    pts = []
    pts += _jaw()                              # 0-16
    pts += _brow(0.245, 0.460)                 # 17-21 right brow (viewer left)
    pts += _brow(0.540, 0.755)                 # 22-26 left brow
    pts += _nose()                             # 27-35
    pts += _eye(0.355, mirror=False)           # 36-41 right eye
    pts += _eye(0.645, mirror=True)            # 42-47 left eye
    pts += _mouth()                            # 48-67
    arr = np.asarray(pts, dtype=np.float64)
    assert arr.shape == (68, 2)
    assert (arr > 0.05).all() and (arr < 0.95).all()
    return arr


def main() -> None:
    arr = build_template()
    out = Path(__file__).resolve().parent.parent / "src" / "lidmark" / "_face_template.py"
    lines = [
        '"""Canonical 68-point face template in unit coordinates.',
        "",
        "Generated by scripts/regen_face_template.py; edit that script, not this",
        'file. Ordering: jaw 0-16, right brow 17-21, left brow 22-26, nose 27-35,',
        'right eye 36-41, left eye 42-47, mouth 48-67."""',
        "",
        "import numpy as np",
        "",
        "FACE_TEMPLATE_68 = np.array([",
    ]
    for x, y in arr:
        lines.append(f"    ({x:.12f}, {y:.12f}),")
    lines.append("], dtype=np.float64)")
    lines.append("")
    out.write_text("\n".join(lines), encoding="utf-8")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
