"""Stochastic image manipulations applied between embedding and decoding.

Two pools: common distortions (identity, resize, gaussian blur, median blur,
a real JPEG codec round trip, and a differentiable JPEG approximation that
masks high-frequency DCT coefficients), and a proxy face-swap that warps
facial regions with known ground-truth landmark motion. One sampled spec is
applied uniformly to a whole batch.

Gradient contract: identity, resize, gaussian blur and the DCT mask propagate
true gradients; median blur and the codec round trip propagate straight-through
(identity) gradients; the proxy swap resamples on a fixed grid, so gradients
flow to the input image.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import DimensionMismatchError, DomainBoundsError
from .payload import NUM_LANDMARKS

PRETRAIN_KINDS = ("identity", "resize", "gausblur", "medblur", "jpegtest", "jpegmask")

# Facial regions moved independently by the proxy swap (point index ranges).
WARP_REGIONS = {
    "eyes": np.arange(36, 48),
    "nose": np.arange(27, 36),
    "mouth": np.arange(48, 68),
}


@dataclass(frozen=True)
class DistortionParams:
    """Frozen default parameters of the distortion pool."""

    resize_factor: float = 0.5
    gausblur_sigma: float = 1.0
    gausblur_kernel: int = 5
    medblur_kernel: int = 5
    jpegtest_quality: int = 50
    jpegmask_keep_y: int = 5
    jpegmask_keep_c: int = 3
    proxyswap_magnitude: float = 8.0
    proxyswap_magnitudes: tuple[float, ...] = (4.0, 8.0, 12.0)
    proxyswap_feather: float = 0.5


@dataclass
class ManipulationSpec:
    kind: str
    params: dict
    seed: int = 0


@dataclass
class WarpRecord:
    """Ground truth of one proxy-swap application on one image."""

    affines: dict[str, np.ndarray]  # region name (or "global") -> 2x3 matrix
    landmarks: np.ndarray  # (68, 2) post-warp points, pixel units
    mean_displacement_px: float


def sample_manipulation(stage: str, rng: np.random.Generator, params: DistortionParams | None = None) -> ManipulationSpec:
    """Draw one batch-wide manipulation for the given training stage."""
    p = params or DistortionParams()
    seed = int(rng.integers(0, 2**31 - 1))
    if stage == "pretrain":
        kind = PRETRAIN_KINDS[int(rng.integers(0, len(PRETRAIN_KINDS)))]
        return ManipulationSpec(kind=kind, params=_default_kind_params(kind, p), seed=seed)
    if stage == "finetune":
        pool: list[ManipulationSpec] = [ManipulationSpec("identity", {}, seed)]
        for mag in p.proxyswap_magnitudes:
            pool.append(
                ManipulationSpec(
                    "proxyswap",
                    {"magnitude": float(mag), "feather": p.proxyswap_feather},
                    seed,
                )
            )
        return pool[int(rng.integers(0, len(pool)))]
    raise DomainBoundsError(f"unknown stage {stage!r}")


def _default_kind_params(kind: str, p: DistortionParams) -> dict:
    return {
        "identity": {},
        "resize": {"factor": p.resize_factor},
        "gausblur": {"sigma": p.gausblur_sigma, "kernel": p.gausblur_kernel},
        "medblur": {"kernel": p.medblur_kernel},
        "jpegtest": {"quality": p.jpegtest_quality},
        "jpegmask": {"keep_y": p.jpegmask_keep_y, "keep_c": p.jpegmask_keep_c},
        "proxyswap": {"magnitude": p.proxyswap_magnitude, "feather": p.proxyswap_feather},
    }[kind]


def apply(spec: ManipulationSpec, images: torch.Tensor, landmarks: np.ndarray):
    """Apply one spec to a batch; returns (images, true extrinsic landmarks)."""
    _check_batch(images, landmarks)
    kind, p = spec.kind, spec.params
    if kind == "identity":
        return images, landmarks
    if kind == "resize":
        return resize_down_up(images, p["factor"]), landmarks
    if kind == "gausblur":
        return gaussian_blur(images, p["sigma"], p["kernel"]), landmarks
    if kind == "medblur":
        return median_blur(images, p["kernel"]), landmarks
    if kind == "jpegtest":
        return jpeg_codec(images, p["quality"]), landmarks
    if kind == "jpegmask":
        return jpeg_mask(images, p["keep_y"], p["keep_c"]), landmarks
    if kind == "proxyswap":
        warped, records = proxy_swap(
            images,
            landmarks,
            magnitude=p["magnitude"],
            seed=spec.seed,
            feather=p.get("feather", 0.5),
            regions=p.get("regions"),
            global_jitter=p.get("global_jitter", 1.0),
        )
        return warped, np.stack([r.landmarks for r in records])
    raise DomainBoundsError(f"unknown manipulation kind {spec.kind!r}")


def _check_batch(images: torch.Tensor, landmarks: np.ndarray) -> None:
    if images.ndim != 4 or images.shape[1] != 3:
        raise DimensionMismatchError(f"expected (B, 3, H, W) images, got {tuple(images.shape)}")
    landmarks = np.asarray(landmarks)
    if landmarks.shape != (images.shape[0], NUM_LANDMARKS, 2):
        raise DimensionMismatchError(
            f"expected ({images.shape[0]}, 68, 2) landmarks, got {landmarks.shape}"
        )


def _straight_through(x: torch.Tensor, value: torch.Tensor) -> torch.Tensor:
    """Forward `value`, but backpropagate as if the op were the identity."""
    return x + (value - x).detach()


def resize_down_up(x: torch.Tensor, factor: float) -> torch.Tensor:
    if not 0.0 < factor <= 1.0:
        raise DomainBoundsError(f"resize factor must be in (0, 1], got {factor}")
    h, w = x.shape[-2:]
    small = F.interpolate(x, scale_factor=factor, mode="bilinear", align_corners=False)
    return F.interpolate(small, size=(h, w), mode="bilinear", align_corners=False)


def _gaussian_kernel1d(sigma: float, kernel: int, dtype, device) -> torch.Tensor:
    half = (kernel - 1) / 2.0
    xs = torch.arange(kernel, dtype=dtype, device=device) - half
    k = torch.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(x: torch.Tensor, sigma: float, kernel: int) -> torch.Tensor:
    if sigma <= 0 or kernel < 1 or kernel % 2 == 0:
        raise DomainBoundsError(f"need sigma > 0 and odd kernel, got sigma={sigma} kernel={kernel}")
    k1 = _gaussian_kernel1d(sigma, kernel, x.dtype, x.device)
    c = x.shape[1]
    pad = kernel // 2
    padded = F.pad(x, (pad, pad, pad, pad), mode="reflect")
    kh = k1.view(1, 1, 1, kernel).expand(c, 1, 1, kernel)
    kv = k1.view(1, 1, kernel, 1).expand(c, 1, kernel, 1)
    out = F.conv2d(padded, kh, groups=c)
    return F.conv2d(out, kv, groups=c)


def median_blur(x: torch.Tensor, kernel: int) -> torch.Tensor:
    if kernel < 1 or kernel % 2 == 0:
        raise DomainBoundsError(f"median kernel must be odd and positive, got {kernel}")
    pad = kernel // 2
    padded = F.pad(x.detach(), (pad, pad, pad, pad), mode="reflect")
    patches = padded.unfold(2, kernel, 1).unfold(3, kernel, 1)
    med = patches.reshape(*patches.shape[:4], -1).median(dim=-1).values
    return _straight_through(x, med)


def jpeg_codec(x: torch.Tensor, quality: int) -> torch.Tensor:
    """Round trip through a real baseline JPEG codec; straight-through gradients."""
    if not 1 <= quality <= 95:
        raise DomainBoundsError(f"JPEG quality must be in [1, 95], got {quality}")
    arrays = x.detach().clamp(-1, 1).permute(0, 2, 3, 1).cpu().numpy()
    out = np.empty_like(arrays)
    for i, arr in enumerate(arrays):
        u8 = np.round((arr + 1.0) / 2.0 * 255.0).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(u8, mode="RGB").save(buf, format="JPEG", quality=int(quality))
        buf.seek(0)
        with Image.open(buf) as im:
            dec = np.asarray(im.convert("RGB"), dtype=np.float32)
        out[i] = dec / 255.0 * 2.0 - 1.0
    value = torch.from_numpy(out).permute(0, 3, 1, 2).to(x.dtype).to(x.device)
    return _straight_through(x, value)


# JPEG full-range color primaries; the inverse is the numeric matrix inverse so
# that mask-free round trips cancel to float precision.
_RGB_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735892, -0.331264108, 0.5],
        [0.5, -0.418687589, -0.081312411],
    ]
)
_YCC_TO_RGB = np.linalg.inv(_RGB_TO_YCC)
_YCC_OFFSET = np.array([0.0, 0.5, 0.5])


def _dct_matrix(dtype, device) -> torch.Tensor:
    n = torch.arange(8, dtype=torch.float64)
    k = n[:, None]
    mat = torch.cos(np.pi * (2 * n[None, :] + 1) * k / 16.0)
    mat[0] *= np.sqrt(1.0 / 8.0)
    mat[1:] *= np.sqrt(2.0 / 8.0)
    return mat.to(dtype=dtype, device=device)


def _blockify(x: torch.Tensor) -> torch.Tensor:
    b, c, h, w = x.shape
    return (
        x.view(b, c, h // 8, 8, w // 8, 8).permute(0, 1, 2, 4, 3, 5).reshape(b, c, -1, 8, 8)
    )


def _unblockify(blocks: torch.Tensor, h: int, w: int) -> torch.Tensor:
    b, c = blocks.shape[:2]
    return (
        blocks.view(b, c, h // 8, w // 8, 8, 8).permute(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)
    )


def jpeg_mask(x: torch.Tensor, keep_y: int, keep_c: int) -> torch.Tensor:
    """Zero DCT coefficients outside the top-left keep square per 8x8 block.

    Luma keeps keep_y x keep_y coefficients, both chroma channels keep
    keep_c x keep_c. Fully differentiable and idempotent.
    """
    for name, keep in (("keep_y", keep_y), ("keep_c", keep_c)):
        if not 1 <= keep <= 8:
            raise DomainBoundsError(f"{name} must be in [1, 8], got {keep}")
    h, w = x.shape[-2:]
    pad_h, pad_w = (-h) % 8, (-w) % 8
    padded = F.pad(x, (0, pad_w, 0, pad_h), mode="reflect") if pad_h or pad_w else x
    ph, pw = padded.shape[-2:]

    fwd = torch.as_tensor(_RGB_TO_YCC, dtype=x.dtype, device=x.device)
    inv = torch.as_tensor(_YCC_TO_RGB, dtype=x.dtype, device=x.device)
    offset = torch.as_tensor(_YCC_OFFSET, dtype=x.dtype, device=x.device).view(1, 3, 1, 1)
    unit = (padded + 1.0) / 2.0
    ycc = torch.einsum("ij,bjhw->bihw", fwd, unit) + offset

    dct = _dct_matrix(x.dtype, x.device)
    blocks = _blockify(ycc)
    coeffs = torch.einsum("ij,bcnjk,lk->bcnil", dct, blocks, dct)
    mask = torch.zeros(3, 8, 8, dtype=x.dtype, device=x.device)
    mask[0, :keep_y, :keep_y] = 1.0
    mask[1:, :keep_c, :keep_c] = 1.0
    coeffs = coeffs * mask[None, :, None]
    restored = torch.einsum("ji,bcnjk,kl->bcnil", dct, coeffs, dct)
    ycc = _unblockify(restored, ph, pw)

    unit = torch.einsum("ij,bjhw->bihw", inv, ycc - offset)
    out = unit * 2.0 - 1.0
    return out[..., :h, :w]


def _rotation_scale(angle: float, scale: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return scale * np.array([[c, -s], [s, c]])


def _affine_about(center: np.ndarray, linear: np.ndarray, translation: np.ndarray) -> np.ndarray:
    """2x3 matrix for p -> linear @ (p - center) + center + translation."""
    offset = center + translation - linear @ center
    return np.hstack([linear, offset[:, None]])


def _apply_affine_points(points: np.ndarray, affine: np.ndarray) -> np.ndarray:
    return points @ affine[:, :2].T + affine[:, 2]


def _invert_affine(affine: np.ndarray) -> np.ndarray:
    inv = np.linalg.inv(affine[:, :2])
    return np.hstack([inv, (-inv @ affine[:, 2])[:, None]])


def _sample_warp_family(rng: np.random.Generator, magnitude: float, regions, global_jitter: float):
    """Batch-wide warp parameters; centroids are filled in per sample."""

    def _direction():
        phi = rng.uniform(0.0, 2 * np.pi)
        return np.array([np.cos(phi), np.sin(phi)])

    fam = {
        "global": {
            "linear": _rotation_scale(
                rng.uniform(-1, 1) * 0.004 * magnitude * global_jitter,
                1.0 + rng.uniform(-1, 1) * 0.002 * magnitude * global_jitter,
            ),
            "translation": _direction() * rng.uniform(0.6, 0.8) * magnitude * global_jitter,
        }
    }
    for name in regions:
        fam[name] = {
            "linear": _rotation_scale(
                rng.uniform(-1, 1) * 0.006 * magnitude,
                1.0 + rng.uniform(-1, 1) * 0.003 * magnitude,
            ),
            # Total centroid displacement of the region, global part included.
            "translation": _direction() * rng.uniform(0.8, 1.3) * magnitude,
        }
    return fam


def proxy_swap(
    images: torch.Tensor,
    landmarks: np.ndarray,
    magnitude: float,
    seed: int,
    feather: float = 0.5,
    regions: tuple[str, ...] | None = None,
    global_jitter: float = 1.0,
    max_tries: int = 10,
) -> tuple[torch.Tensor, list[WarpRecord]]:
    """Warp facial regions with independent affines plus a global jitter.

    Each warped region's centroid moves by a sampled vector of norm in
    [0.8, 1.3] x magnitude, which keeps the mean landmark displacement at or
    above magnitude / 2. The composited image uses feathered region masks; the
    returned landmarks are the exact analytic point transforms.
    """
    _check_batch(images, landmarks)
    if magnitude <= 0:
        raise DomainBoundsError(f"magnitude must be positive, got {magnitude}")
    regions = tuple(regions) if regions is not None else tuple(WARP_REGIONS)
    for name in regions:
        if name not in WARP_REGIONS:
            raise DomainBoundsError(f"unknown warp region {name!r}")
    landmarks = np.asarray(landmarks, dtype=np.float64)
    b, _, h, w = images.shape
    size = np.array([w, h], dtype=np.float64)
    rng = np.random.default_rng(seed)

    for _ in range(max_tries):
        fam = _sample_warp_family(rng, magnitude, regions, global_jitter)
        records = []
        ok = True
        for i in range(b):
            pts = landmarks[i]
            img_center = size / 2.0
            affines = {
                "global": _affine_about(
                    img_center, fam["global"]["linear"], fam["global"]["translation"]
                )
            }
            composite_linear = {}
            for name in regions:
                centroid = pts[WARP_REGIONS[name]].mean(axis=0)
                linear = fam["global"]["linear"] @ fam[name]["linear"]
                affines[name] = _affine_about(centroid, linear, fam[name]["translation"])
                composite_linear[name] = linear
            warped = _apply_affine_points(pts, affines["global"])
            for name in regions:
                warped[WARP_REGIONS[name]] = _apply_affine_points(
                    pts[WARP_REGIONS[name]], affines[name]
                )
            if (warped < 0).any() or (warped > size).any():
                ok = False
                break
            disp_idx = (
                np.concatenate([WARP_REGIONS[r] for r in regions])
                if global_jitter == 0.0
                else np.arange(NUM_LANDMARKS)
            )
            mean_disp = float(np.linalg.norm((warped - pts)[disp_idx], axis=1).mean())
            records.append(
                WarpRecord(affines=affines, landmarks=warped, mean_displacement_px=mean_disp)
            )
        if ok:
            break
    else:
        raise DomainBoundsError(
            f"proxy swap at magnitude {magnitude} kept pushing landmarks out of bounds"
        )

    warped_images = _composite_warp(images, records, regions, feather)
    return warped_images, records


def _composite_warp(
    images: torch.Tensor, records: list[WarpRecord], regions: tuple[str, ...], feather: float
) -> torch.Tensor:
    b, _, h, w = images.shape
    device, dtype = images.device, images.dtype
    ys, xs = torch.meshgrid(
        torch.arange(h, dtype=dtype, device=device) + 0.5,
        torch.arange(w, dtype=dtype, device=device) + 0.5,
        indexing="ij",
    )
    grid_pts = torch.stack([xs, ys], dim=-1)  # (H, W, 2) continuous pixel coords

    sources = torch.empty(b, h, w, 2, dtype=dtype, device=device)
    for i, rec in enumerate(records):
        inv_bg = torch.as_tensor(_invert_affine(rec.affines["global"]), dtype=dtype, device=device)
        src = grid_pts @ inv_bg[:, :2].T + inv_bg[:, 2]
        weights = []
        region_srcs = []
        for name in regions:
            pts = rec.landmarks[WARP_REGIONS[name]]
            center = torch.as_tensor(pts.mean(axis=0), dtype=dtype, device=device)
            half = np.abs(pts - pts.mean(axis=0)).max(axis=0) + max(2.0, 0.05 * h)
            radii = torch.as_tensor(half, dtype=dtype, device=device)
            e = torch.linalg.norm((grid_pts - center) / radii, dim=-1)
            wgt = torch.where(
                e <= 1.0,
                torch.ones_like(e),
                torch.clamp(0.5 * (1 + torch.cos(np.pi * (e - 1.0) / feather)), 0.0, 1.0),
            )
            wgt = torch.where(e > 1.0 + feather, torch.zeros_like(e), wgt)
            inv_r = torch.as_tensor(_invert_affine(rec.affines[name]), dtype=dtype, device=device)
            region_srcs.append(grid_pts @ inv_r[:, :2].T + inv_r[:, 2])
            weights.append(wgt)
        if weights:
            wsum = torch.stack(weights).sum(dim=0)
            scale = torch.clamp(wsum, min=1.0)
            total = torch.zeros_like(src)
            for wgt, rsrc in zip(weights, region_srcs):
                total = total + (wgt / scale)[..., None] * rsrc
            bg_weight = torch.clamp(1.0 - wsum / scale, min=0.0)
            src = total + bg_weight[..., None] * src
        sources[i] = src

    size = torch.tensor([w, h], dtype=dtype, device=device)
    grid = 2.0 * sources / size - 1.0
    return F.grid_sample(images, grid, mode="bilinear", padding_mode="border", align_corners=False)
