"""Report serialization: atomic JSON/CSV writers and matplotlib figures."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_bytes_atomic(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path, obj: dict, stamp: bool = True) -> None:
    if stamp:
        obj = {**obj, "generated_at": timestamp()}
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    write_bytes_atomic(path, text.encode("utf-8"))


def write_bench_csv(path, bench: dict) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["distortion", "ber", "aed_px"])
    for kind, row in bench["distortions"].items():
        writer.writerow([kind, f"{row['ber']:.6f}", f"{row['aed_px']:.6f}"])
    writer.writerow(["average", f"{bench['average']['ber']:.6f}", f"{bench['average']['aed_px']:.6f}"])
    write_bytes_atomic(path, buf.getvalue().encode("utf-8"))


def _save_fig_atomic(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format=Path(path).suffix.lstrip(".") or "png", dpi=120)
    plt.close(fig)
    write_bytes_atomic(path, buf.getvalue())


def bench_figure(bench: dict, path) -> None:
    """Per-distortion BER and AED bars next to the delimited table."""
    kinds = list(bench["distortions"])
    bers = [100.0 * bench["distortions"][k]["ber"] for k in kinds]
    aeds = [bench["distortions"][k]["aed_px"] for k in kinds]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.bar(kinds, bers, color="#4878d0")
    ax1.set_ylabel("BER (%)")
    ax2.bar(kinds, aeds, color="#d65f5f")
    ax2.set_ylabel("AED (px)")
    for ax in (ax1, ax2):
        ax.tick_params(axis="x", rotation=45)
        ax.grid(True, axis="y", alpha=0.3)
    fig.suptitle(
        f"robustness at {bench['image_size']}px (PSNR {bench['psnr_db']:.2f} dB, SSIM {bench['ssim']:.3f})"
    )
    fig.tight_layout()
    _save_fig_atomic(fig, path)


def roc_figure(calibration: dict, real_aeds, fake_aeds, path) -> None:
    """ROC curve with the chosen operating point, plus the AED distributions."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.8))
    fprs = [p["fpr"] for p in calibration["roc"]]
    tprs = [p["tpr"] for p in calibration["roc"]]
    ax1.plot([0] + fprs + [1], [0] + tprs + [1], "-", color="#4878d0")
    best = min(
        calibration["roc"], key=lambda p: -(p["tpr"] - p["fpr"]) * 1e9 + p["threshold"]
    )
    ax1.plot([best["fpr"]], [best["tpr"]], "o", color="#d65f5f")
    ax1.plot([0, 1], [0, 1], ":", color="gray")
    ax1.set_xlabel("FPR")
    ax1.set_ylabel("TPR")
    ax1.set_title(f"AUC {calibration['auc']:.4f}, tau {calibration['tau_px']:.3f} px")
    bins = np.linspace(
        0, max(max(real_aeds, default=1), max(fake_aeds, default=1)) * 1.05, 40
    )
    ax2.hist(real_aeds, bins=bins, alpha=0.6, label="benign", color="#4878d0")
    ax2.hist(fake_aeds, bins=bins, alpha=0.6, label="swapped", color="#d65f5f")
    ax2.axvline(calibration["tau_px"], color="black", linestyle="--", label="tau")
    ax2.set_xlabel("AED (px)")
    ax2.legend()
    fig.tight_layout()
    _save_fig_atomic(fig, path)


def overlay_figure(image_chw: np.ndarray, intrinsic_px: np.ndarray, extrinsic_px: np.ndarray, path, title: str = "") -> None:
    """Image with recovered (green) and re-detected (red) landmark overlays."""
    rgb = np.clip((np.moveaxis(image_chw, 0, 2) + 1.0) / 2.0, 0, 1)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.imshow(rgb, extent=(0, rgb.shape[1], rgb.shape[0], 0))
    ax.scatter(intrinsic_px[:, 0], intrinsic_px[:, 1], s=8, c="#2ca02c", label="recovered")
    ax.scatter(extrinsic_px[:, 0], extrinsic_px[:, 1], s=8, c="#d62728", marker="x", label="re-detected")
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=7)
    ax.set_axis_off()
    fig.tight_layout()
    _save_fig_atomic(fig, path)
