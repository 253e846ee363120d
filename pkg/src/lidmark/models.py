"""Embedding, decoding and discriminator networks.

Three toy-scale convolutional models: an embedder that fuses a payload vector
into a cover image, a decoder with a shared backbone and two factorized heads
(landmark regression, identifier classification), and a scalar-logit
discriminator for the adversarial fidelity objective. GroupNorm keeps every
forward pass independent of batch statistics, so reloaded models reproduce
outputs exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .errors import DomainBoundsError
from .images import SUPPORTED_SIZES
from .payload import LANDMARK_DIM, SUPPORTED_ID_BITS

SEED_MAP_SIDE = 16  # payload FC output is reshaped to 1 x 16 x 16


@dataclass
class ModelConfig:
    image_size: int = 64
    payload_dim: int = 152
    base_channels: int = 32
    se_reduction: int = 16

    def __post_init__(self):
        if self.image_size not in SUPPORTED_SIZES:
            raise DomainBoundsError(
                f"image_size must be one of {SUPPORTED_SIZES}, got {self.image_size}"
            )
        if self.payload_dim - LANDMARK_DIM not in SUPPORTED_ID_BITS:
            raise DomainBoundsError(
                f"payload_dim must be 136 + {SUPPORTED_ID_BITS}, got {self.payload_dim}"
            )
        if self.base_channels < 16 or self.base_channels % 16 != 0:
            raise DomainBoundsError(
                f"base_channels must be a positive multiple of 16, got {self.base_channels}"
            )

    @property
    def id_bits(self) -> int:
        return self.payload_dim - LANDMARK_DIM

    @property
    def head_dims(self) -> tuple[int, int]:
        return (LANDMARK_DIM, self.id_bits)

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "payload_dim": self.payload_dim,
            "base_channels": self.base_channels,
            "se_reduction": self.se_reduction,
        }


@dataclass
class DecodedPayload:
    landmark_pred: torch.Tensor  # (B, 136)
    id_logits: torch.Tensor  # (B, id_bits), pre-sigmoid


class ConvBlock(nn.Module):
    """3x3 conv, GroupNorm, ReLU."""

    def __init__(self, cin: int, cout: int, stride: int = 1):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 3, stride=stride, padding=1)
        self.norm = nn.GroupNorm(min(8, cout), cout)

    def forward(self, x):
        return F.relu(self.norm(self.conv(x)))


class SEGate(nn.Module):
    """Channel gate: squeeze by global pooling, excite through a bottleneck."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = nn.Conv2d(channels, hidden, 1)
        self.fc2 = nn.Conv2d(hidden, channels, 1)

    def forward(self, x):
        s = F.adaptive_avg_pool2d(x, 1)
        s = torch.sigmoid(self.fc2(F.relu(self.fc1(s))))
        return x * s


class SEResBlock(nn.Module):
    """Two 3x3 convolutions with a channel gate and a residual connection."""

    def __init__(self, cin: int, cout: int, reduction: int = 16):
        super().__init__()
        self.block1 = ConvBlock(cin, cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.norm2 = nn.GroupNorm(min(8, cout), cout)
        self.gate = SEGate(cout, reduction)
        self.proj = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x):
        y = self.gate(self.norm2(self.conv2(self.block1(x))))
        return F.relu(y + self.proj(x))


class UpsampleBlock(nn.Module):
    """Nearest-neighbor 2x upsample followed by a ConvBlock."""

    def __init__(self, channels: int):
        super().__init__()
        self.block = ConvBlock(channels, channels)

    def forward(self, x):
        return self.block(F.interpolate(x, scale_factor=2, mode="nearest"))


def _num_upsamples(image_size: int) -> int:
    n = 0
    side = SEED_MAP_SIDE
    while side < image_size:
        side *= 2
        n += 1
    return n


class Embedder(nn.Module):
    """Two-stream fusion network writing a payload into a cover image.

    The image stream extracts cover features; the payload stream lifts the
    flat vector to a spatial map and upsamples it to full resolution (a
    learned expansion stack; "DiffusionNet" in the original naming). Fused
    features are concatenated with the cover image in a global skip
    connection, and a 1x1 convolution regresses a bounded residual.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        c1, c2 = config.base_channels, 2 * config.base_channels
        cw = config.base_channels // 2
        r = config.se_reduction
        self.config = config

        self.image_stream = nn.Sequential(
            ConvBlock(3, c1),
            SEResBlock(c1, c2, r),
        )
        self.payload_fc = nn.Linear(config.payload_dim, SEED_MAP_SIDE * SEED_MAP_SIDE)
        self.payload_stream = nn.Sequential(
            ConvBlock(1, cw),
            *[UpsampleBlock(cw) for _ in range(_num_upsamples(config.image_size))],
            SEResBlock(cw, c1, r),
            SEResBlock(c1, c2, r),
        )
        self.fuse = ConvBlock(2 * c2, c2)
        self.out_conv = nn.Conv2d(c2 + 3, 3, 1)
        with torch.no_grad():
            # Start close to the identity: tiny residual at initialization.
            self.out_conv.weight.mul_(0.1)
            self.out_conv.bias.zero_()

    def forward(self, image: torch.Tensor, payload: torch.Tensor) -> torch.Tensor:
        if image.shape[-1] != self.config.image_size or image.shape[-2] != self.config.image_size:
            raise DomainBoundsError(
                f"expected {self.config.image_size}px input, got {tuple(image.shape)}"
            )
        if payload.shape[-1] != self.config.payload_dim:
            raise DomainBoundsError(
                f"expected payload of length {self.config.payload_dim}, got {tuple(payload.shape)}"
            )
        f_img = self.image_stream(image)
        seed = self.payload_fc(payload).view(-1, 1, SEED_MAP_SIDE, SEED_MAP_SIDE)
        f_payload = self.payload_stream(seed)
        fused = self.fuse(torch.cat([f_img, f_payload], dim=1))
        residual = torch.tanh(self.out_conv(torch.cat([fused, image], dim=1)))
        return torch.clamp(image + residual, -1.0, 1.0)


class PayloadDecoder(nn.Module):
    """Shared convolutional backbone with two factorized linear heads."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        c1, c2 = config.base_channels, 2 * config.base_channels
        r = config.se_reduction
        self.config = config

        n_down = _num_upsamples(config.image_size)
        downs: list[nn.Module] = [ConvBlock(3, c1)]
        for i in range(n_down):
            cout = c2 if i == n_down - 1 else c1
            downs.append(ConvBlock(c1, cout, stride=2))
        self.backbone = nn.Sequential(
            *downs,
            SEResBlock(c2, c2, r),
            SEResBlock(c2, c2, r),
        )
        flat = c2 * SEED_MAP_SIDE * SEED_MAP_SIDE
        self.landmark_head = nn.Linear(flat, LANDMARK_DIM)
        self.id_head = nn.Linear(flat, config.id_bits)

    def forward(self, image: torch.Tensor) -> DecodedPayload:
        if image.shape[-1] != self.config.image_size or image.shape[-2] != self.config.image_size:
            raise DomainBoundsError(
                f"expected {self.config.image_size}px input, got {tuple(image.shape)}"
            )
        shared = torch.flatten(self.backbone(image), start_dim=1)
        return DecodedPayload(
            landmark_pred=self.landmark_head(shared),
            id_logits=self.id_head(shared),
        )


class Discriminator(nn.Module):
    """Convolutional classifier ending in global pooling and a scalar logit."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        c1, c2 = config.base_channels, 2 * config.base_channels
        self.features = nn.Sequential(
            ConvBlock(3, c1, stride=2),
            ConvBlock(c1, c1, stride=2),
            ConvBlock(c1, c2, stride=2),
        )
        self.head = nn.Linear(c2, 1)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        pooled = F.adaptive_avg_pool2d(self.features(image), 1).flatten(1)
        return self.head(pooled).squeeze(-1)


def build_models(config: ModelConfig) -> dict[str, nn.Module]:
    return {
        "embedder": Embedder(config),
        "decoder": PayloadDecoder(config),
        "discriminator": Discriminator(config),
    }


def param_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def flop_estimate(module: nn.Module, *inputs: torch.Tensor) -> int:
    """FLOPs of one forward pass: 2x the multiply-accumulates of conv/linear layers."""
    macs = 0

    def conv_hook(layer, _inp, out):
        nonlocal macs
        per_elem = layer.in_channels // layer.groups * layer.kernel_size[0] * layer.kernel_size[1]
        macs += out.numel() * per_elem

    def linear_hook(layer, _inp, out):
        nonlocal macs
        macs += out.numel() * layer.in_features

    handles = []
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            handles.append(m.register_forward_hook(conv_hook))
        elif isinstance(m, nn.Linear):
            handles.append(m.register_forward_hook(linear_hook))
    try:
        with torch.no_grad():
            module(*inputs)
    finally:
        for h in handles:
            h.remove()
    return 2 * macs


def model_summary(config: ModelConfig) -> dict:
    """Exact parameter counts and estimated forward FLOPs at the configured size."""
    models = build_models(config)
    image = torch.zeros(1, 3, config.image_size, config.image_size)
    payload = torch.zeros(1, config.payload_dim)
    flops = {
        "embedder": flop_estimate(models["embedder"], image, payload),
        "decoder": flop_estimate(models["decoder"], image),
        "discriminator": flop_estimate(models["discriminator"], image),
    }
    params = {name: param_count(m) for name, m in models.items()}
    return {
        "config": config.to_dict(),
        "params": {**params, "total": sum(params.values())},
        "flops": {**flops, "total": sum(flops.values())},
    }
