"""Multi-task losses and the two-stage optimization loop.

Stage one trains against the common-distortion pool; stage two finetunes
against proxy face swaps, adding a manipulation-consistency term and a
stability term (decoder losses on the unattacked watermarked image, unit
weights) that counters catastrophic forgetting. One discriminator step and one
generator step alternate per batch, with a single manipulation sampled per
batch.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import forensics
from .checkpoint import save_checkpoint
from .dataset import DatasetRecord
from .distortion import DistortionParams, apply, sample_manipulation
from .errors import DimensionMismatchError, DomainBoundsError, TrainingDivergedError
from .models import ModelConfig, build_models
from .payload import (
    LANDMARK_DIM,
    compose_payload,
    derive_source_id,
    normalize_landmarks,
)

STAGES = ("pretrain", "finetune")


@dataclass
class LossWeights:
    lambda_enc: float = 1.0
    lambda_l: float = 11.5
    lambda_id: float = 14.7
    lambda_adv: float = 0.1
    lambda_gen: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value) or value < 0:
                raise DomainBoundsError(f"{name} must be finite and non-negative, got {value}")

    @property
    def lambda_stab(self) -> float:
        # Pinned to the landmark weight: regression needs the tighter guard.
        return self.lambda_l

    @classmethod
    def pretrain_defaults(cls) -> "LossWeights":
        return cls(lambda_l=11.5, lambda_id=14.7)

    @classmethod
    def finetune_defaults(cls) -> "LossWeights":
        return cls(lambda_l=4.2, lambda_id=1.0)


@dataclass
class TrainConfig:
    stage: str = "pretrain"
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 4.3e-4
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    weights: LossWeights = field(default_factory=LossWeights.pretrain_defaults)
    distortion: DistortionParams = field(default_factory=DistortionParams)
    seed: int = 0

    def __post_init__(self):
        if self.stage not in STAGES:
            raise DomainBoundsError(f"stage must be one of {STAGES}, got {self.stage!r}")

    @classmethod
    def stage_defaults(cls, stage: str, **overrides) -> "TrainConfig":
        base = {
            "pretrain": dict(
                stage="pretrain",
                epochs=100,
                batch_size=32,
                learning_rate=4.3e-4,
                weights=LossWeights.pretrain_defaults(),
            ),
            "finetune": dict(
                stage="finetune",
                epochs=100,
                batch_size=8,
                learning_rate=4.0e-4,
                weights=LossWeights.finetune_defaults(),
            ),
        }[stage]
        base.update(overrides)
        return cls(**base)


def loss_enc(watermarked: torch.Tensor, cover: torch.Tensor) -> torch.Tensor:
    """Imperceptibility: mean squared error over all elements."""
    if watermarked.shape != cover.shape:
        raise DimensionMismatchError(
            f"shape mismatch {tuple(watermarked.shape)} vs {tuple(cover.shape)}"
        )
    return ((watermarked - cover) ** 2).mean()


def loss_landmark(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean point-wise Euclidean distance over (x, y) pairs, batch-averaged."""
    if pred.shape != target.shape or pred.shape[-1] != LANDMARK_DIM:
        raise DimensionMismatchError(
            f"expected matching (..., {LANDMARK_DIM}) tensors, got {tuple(pred.shape)} vs {tuple(target.shape)}"
        )
    diff = (pred - target).reshape(*pred.shape[:-1], LANDMARK_DIM // 2, 2)
    return torch.linalg.norm(diff, dim=-1).mean()


def loss_id(logits: torch.Tensor, id_bits: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy of the identifier logits against {0, 1} targets."""
    if logits.shape != id_bits.shape:
        raise DimensionMismatchError(
            f"shape mismatch {tuple(logits.shape)} vs {tuple(id_bits.shape)}"
        )
    targets = (id_bits.to(logits.dtype) + 1.0) / 2.0
    return F.binary_cross_entropy_with_logits(logits, targets)


def loss_dec(landmark_term: torch.Tensor, id_term: torch.Tensor, weights: LossWeights) -> torch.Tensor:
    return weights.lambda_l * landmark_term + weights.lambda_id * id_term


def loss_discriminator(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    """Separate covers (label 1) from watermarked images (label 0)."""
    real = F.binary_cross_entropy_with_logits(real_logits, torch.ones_like(real_logits))
    fake = F.binary_cross_entropy_with_logits(fake_logits, torch.zeros_like(fake_logits))
    return 0.5 * (real + fake)


def loss_adv(fake_logits: torch.Tensor) -> torch.Tensor:
    """Push the discriminator's verdict on watermarked images toward 1."""
    return F.binary_cross_entropy_with_logits(fake_logits, torch.ones_like(fake_logits))


def loss_gen(manipulated_wm: torch.Tensor, manipulated_cover: torch.Tensor) -> torch.Tensor:
    """Manipulation consistency: the watermark should not react with the attack."""
    return loss_enc(manipulated_wm, manipulated_cover)


def loss_stab(
    landmark_pred: torch.Tensor,
    id_logits: torch.Tensor,
    landmark_target: torch.Tensor,
    id_target: torch.Tensor,
) -> torch.Tensor:
    """Unweighted sum of both recovery losses on the unattacked image."""
    return loss_landmark(landmark_pred, landmark_target) + loss_id(id_logits, id_target)


def total_generator_loss(stage: str, components: dict, weights: LossWeights) -> torch.Tensor:
    """Stage one: enc + dec + adv terms; stage two adds gen and stab terms."""
    if stage not in STAGES:
        raise DomainBoundsError(f"stage must be one of {STAGES}, got {stage!r}")
    total = (
        weights.lambda_enc * components["enc"]
        + components["dec"]
        + weights.lambda_adv * components["adv"]
    )
    if stage == "finetune":
        total = total + weights.lambda_gen * components["gen"] + weights.lambda_stab * components["stab"]
    return total


class TrainLog:
    """Append-only JSON Lines log of step losses and epoch validation metrics."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []
        self._fh = None
        if self.path is not None:
            self._fh = open(self.path, "w", encoding="utf-8", newline="\n")

    def append(self, record: dict) -> None:
        self.records.append(record)
        if self._fh is not None:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def _prepare_tensors(records: list[DatasetRecord], id_bits: int):
    images = torch.stack([torch.from_numpy(r.image.data) for r in records])
    payloads = []
    landmarks_px = []
    for rec in records:
        vec = normalize_landmarks(rec.landmarks)
        bits = derive_source_id(rec.source_name, id_bits)
        payloads.append(compose_payload(vec, bits))
        landmarks_px.append(rec.landmarks.points)
    payloads = torch.from_numpy(np.stack(payloads)).to(torch.float32)
    return images, payloads, np.stack(landmarks_px)


@torch.no_grad()
def evaluate_identity(models: dict[str, nn.Module], records: list[DatasetRecord], id_bits: int, batch_size: int = 32) -> dict:
    """Identity-channel metrics: BER, pixel AED against the embedded truth, PSNR."""
    images, payloads, _ = _prepare_tensors(records, id_bits)
    bers, aeds, psnrs = [], [], []
    for start in range(0, len(records), batch_size):
        img = images[start : start + batch_size]
        pay = payloads[start : start + batch_size]
        wm = models["embedder"](img, pay)
        decoded = models["decoder"](wm)
        for i, rec in enumerate(records[start : start + batch_size]):
            truth_vec = pay[i, :LANDMARK_DIM].numpy()
            truth_bits = pay[i, LANDMARK_DIM:].numpy().astype(np.int8)
            bers.append(forensics.ber(decoded.id_logits[i].numpy(), truth_bits))
            aeds.append(
                forensics.aed_px(
                    decoded.landmark_pred[i].numpy(),
                    truth_vec,
                    rec.landmarks.width,
                    rec.landmarks.height,
                )
            )
            psnr, _ = forensics.image_quality(wm[i].numpy(), img[i].numpy(), with_ssim=False)
            psnrs.append(psnr)
    return {
        "ber": float(np.mean(bers)),
        "aed_px": float(np.mean(aeds)),
        "psnr_db": float(np.mean(psnrs)),
    }


def train(
    model_config: ModelConfig,
    train_records: list[DatasetRecord],
    val_records: list[DatasetRecord],
    config: TrainConfig,
    checkpoint_path,
    log_path=None,
    models: dict[str, nn.Module] | None = None,
) -> tuple[dict[str, nn.Module], TrainLog]:
    """Run one stage; writes a checkpoint and returns the trained models.

    Finetuning continues from `models` (typically loaded from the stage-one
    checkpoint); passing none for the finetune stage is an error.
    """
    if config.stage == "finetune" and models is None:
        raise DomainBoundsError("finetune requires models from a pretrain checkpoint")
    if models is None:
        models = build_models(model_config)

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    images, payloads, landmarks_px = _prepare_tensors(train_records, model_config.id_bits)
    targets_lm = payloads[:, :LANDMARK_DIM]
    targets_id = payloads[:, LANDMARK_DIM:]

    embedder, decoder, disc = models["embedder"], models["decoder"], models["discriminator"]
    gen_params = list(embedder.parameters()) + list(decoder.parameters())
    opt_g = torch.optim.Adam(
        gen_params, lr=config.learning_rate, betas=config.adam_betas, eps=config.adam_eps
    )
    opt_d = torch.optim.Adam(
        disc.parameters(), lr=config.learning_rate, betas=config.adam_betas, eps=config.adam_eps
    )

    log = TrainLog(log_path)
    n = len(train_records)
    step = 0
    try:
        for epoch in range(config.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = perm[start : start + config.batch_size]
                cover = images[idx]
                payload = payloads[idx]
                lm_px = landmarks_px[idx]
                spec = sample_manipulation(config.stage, rng, config.distortion)

                watermarked = embedder(cover, payload)

                d_loss = loss_discriminator(disc(cover), disc(watermarked.detach()))
                opt_d.zero_grad()
                d_loss.backward()
                opt_d.step()

                manipulated, _ = apply(spec, watermarked, lm_px)
                decoded = decoder(manipulated)
                components = {
                    "enc": loss_enc(watermarked, cover),
                    "adv": loss_adv(disc(watermarked)),
                }
                l_l = loss_landmark(decoded.landmark_pred, targets_lm[idx])
                l_id = loss_id(decoded.id_logits, targets_id[idx])
                components["dec"] = loss_dec(l_l, l_id, config.weights)
                if config.stage == "finetune":
                    with torch.no_grad():
                        cover_manip, _ = apply(spec, cover, lm_px)
                    components["gen"] = loss_gen(manipulated, cover_manip)
                    stab_decoded = decoder(watermarked)
                    components["stab"] = loss_stab(
                        stab_decoded.landmark_pred,
                        stab_decoded.id_logits,
                        targets_lm[idx],
                        targets_id[idx],
                    )
                g_loss = total_generator_loss(config.stage, components, config.weights)

                if not (torch.isfinite(g_loss) and torch.isfinite(d_loss)):
                    log.append({"event": "diverged", "step": step, "epoch": epoch})
                    raise TrainingDivergedError("non-finite loss", step)

                opt_g.zero_grad()
                g_loss.backward()
                opt_g.step()

                record = {
                    "event": "step",
                    "step": step,
                    "epoch": epoch,
                    "kind": spec.kind,
                    "loss_g": float(g_loss),
                    "loss_d": float(d_loss),
                    "loss_enc": float(components["enc"]),
                    "loss_landmark": float(l_l),
                    "loss_id": float(l_id),
                    "loss_adv": float(components["adv"]),
                }
                if config.stage == "finetune":
                    record["loss_gen"] = float(components["gen"])
                    record["loss_stab"] = float(components["stab"])
                log.append(record)
                step += 1

            if val_records:
                metrics = evaluate_identity(models, val_records, model_config.id_bits)
                log.append({"event": "epoch", "epoch": epoch, **{f"val_{k}": v for k, v in metrics.items()}})

        save_checkpoint(
            checkpoint_path,
            models,
            model_config,
            extra={"stage": config.stage, "epochs": config.epochs, "seed": config.seed},
        )
    finally:
        log.close()
    return models, log
