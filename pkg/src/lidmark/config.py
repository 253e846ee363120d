"""Run configuration: documented key = value text files plus flag overrides.

Every default below equals the frozen value documented in the module that
owns the parameter. Unknown keys are hard errors so typos cannot silently
fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass

from .distortion import DistortionParams
from .errors import ConfigError
from .models import ModelConfig
from .training import LossWeights, TrainConfig


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in str(text).split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated floats, got {text!r}") from None


# key -> (parser, default, help)
SCHEMA: dict[str, tuple] = {
    "model.image_size": (int, 64, "square image side: 64, 128 or 256"),
    "model.payload_dim": (int, 152, "total payload length: 152 or 168"),
    "model.base_channels": (int, 32, "width multiple of the conv streams"),
    "model.se_reduction": (int, 16, "squeeze-excitation bottleneck ratio"),
    "train.seed": (int, 0, "seed funneling all run randomness"),
    "train.lambda_enc": (float, 1.0, "imperceptibility loss weight"),
    "train.lambda_adv": (float, 0.1, "adversarial loss weight"),
    "train.lambda_gen": (float, 1.0, "manipulation-consistency loss weight (finetune)"),
    "train.adam_beta1": (float, 0.9, "Adam beta1"),
    "train.adam_beta2": (float, 0.999, "Adam beta2"),
    "train.adam_eps": (float, 1e-8, "Adam epsilon"),
    "train.pretrain.epochs": (int, 100, "stage-one epochs"),
    "train.pretrain.batch_size": (int, 32, "stage-one batch size"),
    "train.pretrain.learning_rate": (float, 4.3e-4, "stage-one learning rate"),
    "train.pretrain.lambda_l": (float, 11.5, "stage-one landmark loss weight"),
    "train.pretrain.lambda_id": (float, 14.7, "stage-one identifier loss weight"),
    "train.finetune.epochs": (int, 100, "stage-two epochs"),
    "train.finetune.batch_size": (int, 8, "stage-two batch size"),
    "train.finetune.learning_rate": (float, 4.0e-4, "stage-two learning rate"),
    "train.finetune.lambda_l": (float, 4.2, "stage-two landmark loss weight"),
    "train.finetune.lambda_id": (float, 1.0, "stage-two identifier loss weight"),
    "distortion.resize_factor": (float, 0.5, "down-up resize factor"),
    "distortion.gausblur_sigma": (float, 1.0, "gaussian blur sigma"),
    "distortion.gausblur_kernel": (int, 5, "gaussian blur kernel (odd)"),
    "distortion.medblur_kernel": (int, 5, "median blur kernel (odd)"),
    "distortion.jpegtest_quality": (int, 50, "real JPEG codec quality"),
    "distortion.jpegmask_keep_y": (int, 5, "DCT mask: kept luma square"),
    "distortion.jpegmask_keep_c": (int, 3, "DCT mask: kept chroma square"),
    "distortion.proxyswap_magnitude": (float, 8.0, "proxy swap displacement, px"),
    "distortion.proxyswap_magnitudes": (
        _parse_floats,
        (4.0, 8.0, 12.0),
        "finetune-pool swap magnitudes, comma separated",
    ),
    "distortion.proxyswap_feather": (float, 0.5, "blend feather width fraction"),
    "forensics.tau_px": (float, 3.0, "detection threshold in pixels (calibrated)"),
}


@dataclass
class RunConfig:
    values: dict

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({key: default for key, (_, default, _) in SCHEMA.items()})

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        cfg = cls.defaults()
        if path is not None:
            cfg._read_file(path)
        for key, raw in (overrides or {}).items():
            cfg.set(key, raw)
        return cfg

    def _read_file(self, path) -> None:
        seen = set()
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                if "=" not in text:
                    raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {line.rstrip()!r}")
                key, raw = (part.strip() for part in text.split("=", 1))
                if key in seen:
                    raise ConfigError(f"{path}:{line_no}: duplicate key {key!r}")
                seen.add(key)
                try:
                    self.set(key, raw)
                except ConfigError as exc:
                    raise ConfigError(f"{path}:{line_no}: {exc}") from None

    def set(self, key: str, raw) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        parser = SCHEMA[key][0]
        try:
            self.values[key] = parser(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value {raw!r} for {key!r}") from None

    def __getitem__(self, key: str):
        return self.values[key]

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            image_size=self["model.image_size"],
            payload_dim=self["model.payload_dim"],
            base_channels=self["model.base_channels"],
            se_reduction=self["model.se_reduction"],
        )

    def distortion_params(self) -> DistortionParams:
        return DistortionParams(
            resize_factor=self["distortion.resize_factor"],
            gausblur_sigma=self["distortion.gausblur_sigma"],
            gausblur_kernel=self["distortion.gausblur_kernel"],
            medblur_kernel=self["distortion.medblur_kernel"],
            jpegtest_quality=self["distortion.jpegtest_quality"],
            jpegmask_keep_y=self["distortion.jpegmask_keep_y"],
            jpegmask_keep_c=self["distortion.jpegmask_keep_c"],
            proxyswap_magnitude=self["distortion.proxyswap_magnitude"],
            proxyswap_magnitudes=tuple(self["distortion.proxyswap_magnitudes"]),
            proxyswap_feather=self["distortion.proxyswap_feather"],
        )

    def train_config(self, stage: str, **overrides) -> TrainConfig:
        weights = LossWeights(
            lambda_enc=self["train.lambda_enc"],
            lambda_adv=self["train.lambda_adv"],
            lambda_gen=self["train.lambda_gen"],
            lambda_l=self[f"train.{stage}.lambda_l"],
            lambda_id=self[f"train.{stage}.lambda_id"],
        )
        kwargs = dict(
            stage=stage,
            epochs=self[f"train.{stage}.epochs"],
            batch_size=self[f"train.{stage}.batch_size"],
            learning_rate=self[f"train.{stage}.learning_rate"],
            adam_betas=(self["train.adam_beta1"], self["train.adam_beta2"]),
            adam_eps=self["train.adam_eps"],
            weights=weights,
            distortion=self.distortion_params(),
            seed=self["train.seed"],
        )
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return TrainConfig(**kwargs)

    @property
    def tau_px(self) -> float:
        return self["forensics.tau_px"]


def default_config_text() -> str:
    """A fully commented configuration file with every key at its default."""
    lines = ["# lidmark run configuration (key = value; # starts a comment)"]
    section = None
    for key, (_, default, help_text) in SCHEMA.items():
        head = key.split(".", 1)[0]
        if head != section:
            section = head
            lines.append("")
        if isinstance(default, tuple):
            default = ",".join(str(v) for v in default)
        lines.append(f"{key} = {default}  # {help_text}")
    return "\n".join(lines) + "\n"
