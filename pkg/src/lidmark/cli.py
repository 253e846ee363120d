"""Command-line pipeline: synthesis, training, embedding, attacks, forensics.

Every subcommand funnels its randomness through one --seed flag, writes
artifacts atomically, and emits sorted-key JSON so repeated runs diff cleanly
(reports carry a single generated_at timestamp field).
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import forensics
from .checkpoint import load_checkpoint
from .config import RunConfig
from .dataset import generate_dataset, load_dataset, split_dataset, write_dataset
from .distortion import PRETRAIN_KINDS, ManipulationSpec, WARP_REGIONS, apply
from .errors import DomainBoundsError, LidmarkError
from .images import ImageBuffer, to_uint8
from .models import model_summary
from .payload import (
    LANDMARK_DIM,
    compose_payload,
    denormalize_landmarks,
    derive_source_id,
    id_to_hex,
    normalize_landmarks,
    read_sidecar,
    sidecar_line,
)
from .reporting import (
    bench_figure,
    overlay_figure,
    roc_figure,
    write_bench_csv,
    write_bytes_atomic,
    write_json_atomic,
)
from .training import evaluate_identity, train


def _setup_threads() -> None:
    raw = os.environ.get("LIDMARK_THREADS")
    if raw:
        try:
            torch.set_num_threads(max(1, int(raw)))
        except ValueError:
            raise DomainBoundsError(f"LIDMARK_THREADS must be an integer, got {raw!r}") from None


def _emit(obj: dict, out_path=None) -> None:
    if out_path:
        write_json_atomic(out_path, obj)
    print(json.dumps(obj, sort_keys=True, indent=2))


def _save_png_atomic(img: ImageBuffer, path) -> None:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img), mode="RGB").save(buf, format="PNG")
    write_bytes_atomic(path, buf.getvalue())


def _load_models(ckpt_path):
    config, models, extra = load_checkpoint(ckpt_path)
    for model in models.values():
        model.eval()
    return config, models, extra


def _records_to_tensors(records, id_bits):
    images = torch.stack([torch.from_numpy(r.image.data) for r in records])
    payloads, lm_px = [], []
    for rec in records:
        vec = normalize_landmarks(rec.landmarks)
        bits = derive_source_id(rec.source_name, id_bits)
        payloads.append(compose_payload(vec, bits))
        lm_px.append(rec.landmarks.points)
    return images, torch.from_numpy(np.stack(payloads)).float(), np.stack(lm_px)


@torch.no_grad()
def _embed_batch(models, images: torch.Tensor, payloads: torch.Tensor, chunk: int = 32) -> torch.Tensor:
    out = []
    for start in range(0, images.shape[0], chunk):
        out.append(models["embedder"](images[start : start + chunk], payloads[start : start + chunk]))
    return torch.cat(out)


@torch.no_grad()
def _decode_batch(models, images: torch.Tensor, chunk: int = 32):
    vecs, logits = [], []
    for start in range(0, images.shape[0], chunk):
        decoded = models["decoder"](images[start : start + chunk])
        vecs.append(decoded.landmark_pred)
        logits.append(decoded.id_logits)
    return torch.cat(vecs).numpy().astype(np.float64), torch.cat(logits).numpy().astype(np.float64)


# --- subcommand handlers ---


def cmd_dataset_synth(args) -> int:
    records = generate_dataset(count=args.count, canvas=args.size, seed=args.seed)
    sidecar = write_dataset(records, args.out)
    _emit(
        {
            "count": len(records),
            "dir": str(args.out),
            "sidecar": str(sidecar),
            "size": args.size,
            "seed": args.seed,
        }
    )
    return 0


def cmd_payload(args) -> int:
    records = {rec.file: rec for rec in read_sidecar(args.sidecar)}
    name = Path(args.file).name
    if name not in records:
        raise DomainBoundsError(f"no sidecar record for {name!r} in {args.sidecar}")
    lm = records[name].landmarks
    vec = normalize_landmarks(lm)
    bits = derive_source_id(Path(name).stem, args.id_bits)
    payload = compose_payload(vec, bits)
    _emit(
        {
            "file": name,
            "width": lm.width,
            "height": lm.height,
            "id_bits": args.id_bits,
            "id_hex": id_to_hex(bits),
            "payload": [float(v) for v in payload],
        },
        args.out,
    )
    return 0


def cmd_train(args) -> int:
    run_cfg = RunConfig.load(args.config)
    if args.seed is not None:
        run_cfg.set("train.seed", args.seed)
    records = load_dataset(args.images, args.sidecar)
    val_fraction = args.val_fraction
    train_recs, val_recs, _ = split_dataset(
        records, (1.0 - val_fraction, val_fraction, 0.0), seed=run_cfg["train.seed"]
    )
    tcfg = run_cfg.train_config(
        args.stage,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
    )
    models = None
    if args.stage == "finetune":
        if not args.init:
            raise DomainBoundsError("finetune requires --init with the stage-one checkpoint")
        mcfg, models, _ = _load_models(args.init)
        for model in models.values():
            model.train()
    else:
        if args.init:
            mcfg, models, _ = _load_models(args.init)
            for model in models.values():
                model.train()
        else:
            mcfg = run_cfg.model_config()
    models, _log = train(
        mcfg, train_recs, val_recs, tcfg, checkpoint_path=args.out, log_path=args.log
    )
    metrics = evaluate_identity(models, val_recs or train_recs, mcfg.id_bits)
    _emit(
        {
            "checkpoint": str(args.out),
            "stage": args.stage,
            "epochs": tcfg.epochs,
            "train_count": len(train_recs),
            "val_count": len(val_recs),
            **{f"val_{k}": v for k, v in metrics.items()},
        }
    )
    return 0


def cmd_embed(args) -> int:
    mcfg, models, _ = _load_models(args.ckpt)
    records = load_dataset(args.images, args.sidecar)
    if not records:
        raise DomainBoundsError(f"no records found under {args.images}")
    images, payloads, _ = _records_to_tensors(records, mcfg.id_bits)
    watermarked = _embed_batch(models, images, payloads)

    out_dir = Path(args.out_dir)
    os.makedirs(out_dir, exist_ok=True)
    registry = (
        forensics.SourceRegistry.load(args.registry)
        if args.registry and Path(args.registry).exists()
        else forensics.SourceRegistry()
    )
    collisions = []
    psnrs, ssims = [], []
    sidecar_lines = []
    for i, rec in enumerate(records):
        img = ImageBuffer(watermarked[i].numpy())
        fname = f"{rec.source_name}.png"
        _save_png_atomic(img, out_dir / fname)
        sidecar_lines.append(sidecar_line(fname, rec.landmarks))
        psnr, ssim = forensics.image_quality(img.data, images[i].numpy())
        psnrs.append(psnr)
        ssims.append(ssim)
        id_hex = id_to_hex(derive_source_id(rec.source_name, mcfg.id_bits))
        try:
            registry.register(id_hex, rec.source_name)
        except DomainBoundsError:
            collisions.append({"file": fname, "id_hex": id_hex})
    write_bytes_atomic(out_dir / "landmarks.jsonl", ("\n".join(sidecar_lines) + "\n").encode())
    if args.registry:
        registry.save(args.registry)
    _emit(
        {
            "count": len(records),
            "out_dir": str(out_dir),
            "psnr_db": float(np.mean(psnrs)),
            "ssim": float(np.mean(ssims)),
            "registry": str(args.registry) if args.registry else None,
            "id_collisions": collisions,
        },
        args.out,
    )
    return 0


def _attack_spec(args, run_cfg: RunConfig) -> ManipulationSpec:
    p = run_cfg.distortion_params()
    kind = args.kind
    params: dict = {}
    if kind == "resize":
        params["factor"] = args.factor if args.factor is not None else p.resize_factor
    elif kind == "gausblur":
        params["sigma"] = args.sigma if args.sigma is not None else p.gausblur_sigma
        params["kernel"] = args.kernel if args.kernel is not None else p.gausblur_kernel
    elif kind == "medblur":
        params["kernel"] = args.kernel if args.kernel is not None else p.medblur_kernel
    elif kind == "jpegtest":
        params["quality"] = args.quality if args.quality is not None else p.jpegtest_quality
    elif kind == "jpegmask":
        params["keep_y"] = args.keep_y if args.keep_y is not None else p.jpegmask_keep_y
        params["keep_c"] = args.keep_c if args.keep_c is not None else p.jpegmask_keep_c
    elif kind == "proxyswap":
        params["magnitude"] = args.magnitude if args.magnitude is not None else p.proxyswap_magnitude
        params["feather"] = args.feather if args.feather is not None else p.proxyswap_feather
        if args.regions:
            params["regions"] = tuple(args.regions.split(","))
        if args.global_jitter is not None:
            params["global_jitter"] = args.global_jitter
    return ManipulationSpec(kind=kind, params=params, seed=args.seed)


def cmd_attack(args) -> int:
    run_cfg = RunConfig.load(args.config)
    spec = _attack_spec(args, run_cfg)
    records = load_dataset(args.images, args.sidecar)
    if not records:
        raise DomainBoundsError(f"no records found under {args.images}")
    images = torch.stack([torch.from_numpy(r.image.data) for r in records])
    lm_px = np.stack([r.landmarks.points for r in records])
    with torch.no_grad():
        attacked, new_lm = apply(spec, images, lm_px)

    out_dir = Path(args.out_dir)
    os.makedirs(out_dir, exist_ok=True)
    sidecar_lines = []
    for i, rec in enumerate(records):
        fname = f"{rec.source_name}.png"
        img = ImageBuffer(attacked[i].clamp(-1, 1).numpy())
        _save_png_atomic(img, out_dir / fname)
        lm = type(rec.landmarks)(
            points=new_lm[i], width=rec.landmarks.width, height=rec.landmarks.height
        )
        sidecar_lines.append(sidecar_line(fname, lm))
    write_bytes_atomic(out_dir / "landmarks.jsonl", ("\n".join(sidecar_lines) + "\n").encode())
    _emit(
        {
            "kind": spec.kind,
            "params": spec.params if spec.kind != "proxyswap" else {
                k: (list(v) if isinstance(v, tuple) else v) for k, v in spec.params.items()
            },
            "seed": spec.seed,
            "count": len(records),
            "out_dir": str(out_dir),
        },
        args.out,
    )
    return 0


def _resolve_tau(args, run_cfg: RunConfig) -> float:
    if args.tau is not None:
        return args.tau
    if args.calibration:
        with open(args.calibration, "r", encoding="utf-8") as fh:
            return float(json.load(fh)["tau_px"])
    return run_cfg.tau_px


def cmd_verify(args) -> int:
    run_cfg = RunConfig.load(args.config)
    tau = _resolve_tau(args, run_cfg)
    mcfg, models, _ = _load_models(args.ckpt)
    from .images import load_png

    image = load_png(args.image)
    name = Path(args.image).name
    records = {rec.file: rec for rec in read_sidecar(args.sidecar)}

    tensor = torch.from_numpy(image.data).unsqueeze(0)
    vecs, logits = _decode_batch(models, tensor)
    intrinsic = vecs[0]

    if name not in records:
        # No extrinsic geometry available: detection is undecidable, tracing
        # still runs from the decoded identifier.
        report = forensics.ForensicReport(verdict="undecidable", aed_global_px=None, tau_px=tau)
    else:
        lm = records[name].landmarks
        extrinsic = normalize_landmarks(lm)
        report = forensics.consistency_check(
            intrinsic, extrinsic, lm.width, lm.height, tau_px=tau
        )
    bits = forensics.binarize(logits[0])
    report.id_bits = bits
    report.id_hex = id_to_hex(bits)
    if args.registry:
        result = forensics.trace(logits[0], forensics.SourceRegistry.load(args.registry))
        report.matched_source = result.matched_source
        report.match_distance = result.distance
    if args.truth_source is not None:
        truth = derive_source_id(args.truth_source, mcfg.id_bits)
        report.ber = forensics.ber(logits[0], truth)
    _emit(report.to_dict(), args.out)
    if args.fig and name in records:
        lm = records[name].landmarks
        intrinsic_px = denormalize_landmarks(intrinsic, lm.width, lm.height).points
        overlay_figure(
            image.data,
            intrinsic_px,
            lm.points,
            args.fig,
            title=f"verdict: {report.verdict} (AED {report.aed_global_px:.2f} px, tau {tau:.2f})",
        )
    return 0


def cmd_trace(args) -> int:
    _, models, _ = _load_models(args.ckpt)
    from .images import load_png

    image = load_png(args.image)
    _, logits = _decode_batch(models, torch.from_numpy(image.data).unsqueeze(0))
    registry = forensics.SourceRegistry.load(args.registry)
    result = forensics.trace(logits[0], registry)
    _emit(
        {
            "image": str(args.image),
            "id_hex": result.id_hex,
            "matched_source": result.matched_source,
            "distance": result.distance,
        },
        args.out,
    )
    return 0


def _decode_aeds_after(models, spec, watermarked, lm_px, records, extrinsic_override=None):
    """AED between decoded landmarks and the post-attack extrinsic truth."""
    with torch.no_grad():
        attacked, new_lm = apply(spec, watermarked, lm_px)
    vecs, _ = _decode_batch(models, attacked)
    aeds = []
    for i, rec in enumerate(records):
        w, h = rec.landmarks.width, rec.landmarks.height
        extrinsic = (new_lm[i] if extrinsic_override is None else extrinsic_override[i]) / np.array([w, h])
        aeds.append(forensics.aed_px(vecs[i], extrinsic.reshape(-1), w, h))
    return aeds


def cmd_calibrate(args) -> int:
    run_cfg = RunConfig.load(args.config)
    mcfg, models, _ = _load_models(args.ckpt)
    records = load_dataset(args.images, args.sidecar)
    if not records:
        raise DomainBoundsError(f"no records found under {args.images}")
    images, payloads, lm_px = _records_to_tensors(records, mcfg.id_bits)
    watermarked = _embed_batch(models, images, payloads)

    p = run_cfg.distortion_params()
    magnitude = args.magnitude if args.magnitude is not None else p.proxyswap_magnitude
    rng = np.random.default_rng(args.seed)
    real_aeds: list[float] = []
    for kind in PRETRAIN_KINDS:
        spec = ManipulationSpec(
            kind, dict(_kind_defaults(kind, p)), seed=int(rng.integers(0, 2**31 - 1))
        )
        real_aeds.extend(_decode_aeds_after(models, spec, watermarked, lm_px, records))
    swap_spec = ManipulationSpec(
        "proxyswap",
        {"magnitude": magnitude, "feather": p.proxyswap_feather},
        seed=int(rng.integers(0, 2**31 - 1)),
    )
    fake_aeds = _decode_aeds_after(models, swap_spec, watermarked, lm_px, records)

    calib = forensics.calibrate_threshold(real_aeds, fake_aeds)
    payload = {
        **calib.to_dict(),
        "n_real": len(real_aeds),
        "n_fake": len(fake_aeds),
        "magnitude": magnitude,
        "seed": args.seed,
    }
    _emit(payload, args.out)
    if args.fig:
        roc_figure(calib.to_dict(), real_aeds, fake_aeds, args.fig)
    return 0


def _kind_defaults(kind, p):
    from .distortion import _default_kind_params

    return _default_kind_params(kind, p)


def cmd_bench(args) -> int:
    run_cfg = RunConfig.load(args.config)
    mcfg, models, _ = _load_models(args.ckpt)
    records = load_dataset(args.images, args.sidecar)
    if not records:
        raise DomainBoundsError(f"no records found under {args.images}")
    images, payloads, lm_px = _records_to_tensors(records, mcfg.id_bits)
    watermarked = _embed_batch(models, images, payloads)

    psnrs, ssims = [], []
    for i in range(len(records)):
        psnr, ssim = forensics.image_quality(watermarked[i].numpy(), images[i].numpy())
        psnrs.append(psnr)
        ssims.append(ssim)

    p = run_cfg.distortion_params()
    rng = np.random.default_rng(args.seed)
    table = {}
    truth_lm = payloads[:, :LANDMARK_DIM].numpy().astype(np.float64)
    truth_id = payloads[:, LANDMARK_DIM:].numpy().astype(np.float64)
    for kind in PRETRAIN_KINDS:
        spec = ManipulationSpec(
            kind, dict(_kind_defaults(kind, p)), seed=int(rng.integers(0, 2**31 - 1))
        )
        with torch.no_grad():
            attacked, _ = apply(spec, watermarked, lm_px)
        vecs, logits = _decode_batch(models, attacked)
        bers = [forensics.ber(logits[i], truth_id[i]) for i in range(len(records))]
        aeds = [
            forensics.aed_px(
                vecs[i], truth_lm[i], records[i].landmarks.width, records[i].landmarks.height
            )
            for i in range(len(records))
        ]
        table[_display_name(kind)] = {"ber": float(np.mean(bers)), "aed_px": float(np.mean(aeds))}

    bench = {
        "image_size": mcfg.image_size,
        "payload_dim": mcfg.payload_dim,
        "count": len(records),
        "seed": args.seed,
        "psnr_db": float(np.mean(psnrs)),
        "ssim": float(np.mean(ssims)),
        "distortions": table,
        "average": {
            "ber": float(np.mean([row["ber"] for row in table.values()])),
            "aed_px": float(np.mean([row["aed_px"] for row in table.values()])),
        },
    }
    _emit(bench, args.out)
    if args.csv:
        write_bench_csv(args.csv, bench)
    if args.fig:
        bench_figure(bench, args.fig)
    return 0


def _display_name(kind: str) -> str:
    return {
        "identity": "Identity",
        "resize": "Resize",
        "gausblur": "GausBlur",
        "medblur": "MedBlur",
        "jpegtest": "JpegTest",
        "jpegmask": "JpegMask",
        "proxyswap": "ProxySwap",
    }[kind]


def cmd_model_info(args) -> int:
    if args.ckpt:
        mcfg, _, _ = _load_models(args.ckpt)
    else:
        mcfg = RunConfig.load(args.config).model_config()
    summary = model_summary(mcfg)
    summary["params_m"] = summary["params"]["total"] / 1e6
    summary["flops_g"] = summary["flops"]["total"] / 1e9
    _emit(summary, args.out)
    return 0


# --- parser ---


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidmark",
        description="Landmark/identifier watermarking pipeline for face forensics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", default=None, help="key = value run configuration file")
        p.add_argument("--out", default=None, help="write the JSON report here as well as stdout")
        return p

    p = add("dataset-synth", cmd_dataset_synth, "render synthetic faces with exact landmarks")
    p.add_argument("--count", type=int, required=True, help="number of faces")
    p.add_argument("--size", type=int, default=64, choices=(64, 128, 256), help="canvas side")
    p.add_argument("--seed", type=int, default=0, help="base seed; face i uses seed+i")
    p.set_defaults(out=None)
    p.add_argument("--out-dir", dest="out", required=True, help="output directory")
    # dataset-synth writes files, not a JSON report
    p.set_defaults(func=cmd_dataset_synth)

    p = add("payload", cmd_payload, "compose the watermark payload for one image")
    p.add_argument("--sidecar", required=True, help="landmark sidecar (JSON Lines)")
    p.add_argument("--file", required=True, help="image file name within the sidecar")
    p.add_argument("--id-bits", type=int, default=16, choices=(16, 32), help="identifier length")

    p = add("train", cmd_train, "train one stage and write a checkpoint")
    p.add_argument("--stage", required=True, choices=("pretrain", "finetune"))
    p.add_argument("--images", required=True, help="image directory")
    p.add_argument("--sidecar", required=True, help="landmark sidecar")
    p.add_argument("--init", default=None, help="checkpoint to continue from")
    p.add_argument("--log", default=None, help="JSON Lines training log path")
    p.add_argument("--epochs", type=int, default=None, help="override configured epochs")
    p.add_argument("--batch-size", type=int, default=None, help="override configured batch size")
    p.add_argument("--learning-rate", type=float, default=None, help="override configured LR")
    p.add_argument("--seed", type=int, default=None, help="override configured seed")
    p.add_argument("--val-fraction", type=float, default=0.1, help="held-out validation share")
    p.set_defaults(out=None)
    p.add_argument("--out-ckpt", dest="out", required=True, help="checkpoint output path")
    p.set_defaults(func=cmd_train)

    p = add("embed", cmd_embed, "watermark a directory of images")
    p.add_argument("--ckpt", required=True, help="trained checkpoint")
    p.add_argument("--images", required=True)
    p.add_argument("--sidecar", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--registry", default=None, help="source registry (JSON Lines) to update")

    p = add("attack", cmd_attack, "apply one manipulation uniformly to a directory")
    p.add_argument(
        "--kind",
        required=True,
        choices=("identity", "resize", "gausblur", "medblur", "jpegtest", "jpegmask", "proxyswap"),
    )
    p.add_argument("--images", required=True)
    p.add_argument("--sidecar", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--factor", type=float, default=None, help="resize: down-up factor")
    p.add_argument("--sigma", type=float, default=None, help="gausblur: standard deviation")
    p.add_argument("--kernel", type=int, default=None, help="blur kernel size (odd)")
    p.add_argument("--quality", type=int, default=None, help="jpegtest: codec quality")
    p.add_argument("--keep-y", type=int, default=None, help="jpegmask: kept luma square")
    p.add_argument("--keep-c", type=int, default=None, help="jpegmask: kept chroma square")
    p.add_argument("--magnitude", type=float, default=None, help="proxyswap: displacement px")
    p.add_argument("--feather", type=float, default=None, help="proxyswap: blend feather")
    p.add_argument(
        "--regions",
        default=None,
        help=f"proxyswap: comma list from {sorted(WARP_REGIONS)} (default all)",
    )
    p.add_argument(
        "--global-jitter", type=float, default=None, help="proxyswap: global jitter scale (0 disables)"
    )

    p = add("verify", cmd_verify, "detection + localization report for one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--sidecar", required=True, help="extrinsic landmarks (re-detected or ground truth)")
    p.add_argument("--tau", type=float, default=None, help="detection threshold in px")
    p.add_argument("--calibration", default=None, help="calibration JSON providing tau_px")
    p.add_argument("--registry", default=None, help="trace the identifier against this registry")
    p.add_argument("--truth-source", default=None, help="known source name; reports BER")
    p.add_argument("--fig", default=None, help="write a landmark overlay figure (PNG)")

    p = add("trace", cmd_trace, "decode the identifier and look up its source")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--registry", required=True)

    p = add("calibrate", cmd_calibrate, "derive the detection threshold from a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--sidecar", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--magnitude", type=float, default=None, help="proxy swap magnitude, px")
    p.add_argument("--fig", default=None, help="write ROC + distribution figure (PNG)")

    p = add("bench", cmd_bench, "robustness table across the common distortions")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--sidecar", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", default=None, help="write the table as CSV too")
    p.add_argument("--fig", default=None, help="write BER/AED bar charts (PNG)")

    p = add("model-info", cmd_model_info, "parameter count and FLOP estimate as JSON")
    p.add_argument("--ckpt", default=None, help="read the architecture from a checkpoint")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _setup_threads()
        return args.func(args)
    except LidmarkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
