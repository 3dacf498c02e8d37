"""Command-line entry point: ingest, phantom, downsample, train, reconstruct, evaluate."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .dataset import Manifest, ManifestError, ingest_directory, load_images
from .image import InvalidImageError, is_supported, png_bit_depth, read_image, write_image
from .metrics import compute_metrics, summarize
from .nn import CheckpointFormatError, ConfigError, build_model, load_checkpoint, save_checkpoint
from .patchwork import patchwork_reconstruct
from .phantom import generate_phantoms
from .sampling import DownsamplingRatio, bicubic_upsample, downsample, make_sparse_input, sample_mask, zero_fill
from .training import TrainingDivergedError, fit, seed_stream, split_dataset

log = logging.getLogger("pamrecon")


class CommandError(Exception):
    """Reported as ``error: <message>`` with exit status 1."""


def _ratio(text):
    try:
        return DownsamplingRatio.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _run_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _bit_depth_for(path, like=None):
    if like and like.lower().endswith(".png") and path.lower().endswith(".png"):
        return png_bit_depth(like)
    return 16


# ---------------------------------------------------------------- commands


def cmd_ingest(args):
    if not os.path.isdir(args.src):
        raise CommandError(f"not a directory: {args.src}")
    out = args.out or os.path.join(args.src, "ingested")
    manifest, skipped = ingest_directory(args.src, out, floor=args.floor)
    print(f"ingested {len(manifest)} images into {out}, skipped {skipped}")
    if not len(manifest):
        print("warning: no images ingested", file=sys.stderr)
    return 0


def cmd_phantom(args):
    cfg = _run_config(args)
    count = args.count if args.count is not None else cfg.phantom_count
    size = args.size if args.size is not None else cfg.phantom_size
    out = args.out or "phantoms"
    os.makedirs(out, exist_ok=True)
    pcfg = replace(cfg.phantom_config(), shape=(size, size))
    images = generate_phantoms(count, pcfg, seed=cfg.seed)
    entries = []
    for i, img in enumerate(images):
        name = f"phantom_{i:04d}.{args.format}"
        write_image(os.path.join(out, name), img)
        entries.append((name, None))
    Manifest(entries).write(os.path.join(out, "manifest.txt"))
    print(f"wrote {count} phantoms of {size}x{size} to {out}")
    return 0


def cmd_downsample(args):
    out = args.output or args.out
    if not out:
        raise CommandError("no output path given")
    img = read_image(args.input)
    h, w = img.shape
    ratio = args.ratio
    if args.mode == "zerofill":
        result = zero_fill(downsample(img, ratio))
    elif args.mode == "bicubic":
        result = bicubic_upsample(downsample(img, ratio))
    else:
        result = sample_mask(ratio, h, w).astype(np.float64)
    _ensure_parent(out)
    write_image(out, result, bit_depth=_bit_depth_for(out, args.input))
    print(
        f"effective pixel fraction {100 * ratio.effective_fraction(h, w):.2f}% "
        f"(asymptotic {100 * ratio.asymptotic_fraction:.2f}%)"
    )
    return 0


def _load_dataset(cfg):
    """Return (train, val) image lists for the configured dataset."""
    src = cfg.dataset
    if src == "phantoms":
        images = generate_phantoms(cfg.phantom_count, cfg.phantom_config(), seed=cfg.seed)
        return images, images
    if not src or not os.path.exists(src):
        raise CommandError(f"dataset not found: {src!r}")
    if os.path.isdir(src):
        mpath = os.path.join(src, "manifest.txt")
        if os.path.exists(mpath):
            manifest = Manifest.read(mpath)
        else:
            names = sorted(n for n in os.listdir(src) if is_supported(n))
            manifest = Manifest([(n, None) for n in names], root=src)
    else:
        manifest = Manifest.read(src)
    if not len(manifest):
        raise CommandError(f"dataset {src!r} has no images")
    if manifest.paths("train"):
        return load_images(manifest, "train"), load_images(manifest, "val") or None
    train, val, _ = split_dataset(manifest.paths(), cfg.split, cfg.seed)
    return [read_image(p) for p in train], [read_image(p) for p in val] or None


def cmd_train(args):
    cfg = _run_config(args)
    out = args.out or cfg.out
    os.makedirs(out, exist_ok=True)
    train, val = _load_dataset(cfg)
    model_cfg = cfg.model_config()
    if cfg.resume:
        model, _ = load_checkpoint(cfg.resume)
        if model.cfg != model_cfg:
            raise CommandError(f"resume checkpoint architecture {model.cfg} does not match config")
    else:
        model = build_model(model_cfg, seed=int(seed_stream(cfg.seed, "init").integers(0, 2**31)))
    log_path = os.path.join(out, cfg.log)
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_psnr,val_ssim,saving_metric\n")
    try:
        result = fit(model, train, cfg.train_config(), cfg.augment_config(), val, log_path)
    except TrainingDivergedError as exc:
        raise CommandError(f"{exc}; parameter norms: {exc.dump['param_norms']}") from None
    model.load_state_dict(result.checkpoint.state)
    ck = result.checkpoint
    meta = {
        "epoch": ck.epoch,
        "metrics": ck.metrics,
        "saving_metric": ck.saving_metric,
        "ratio": str(cfg.ratio),
        "tile": cfg.tile,
        "buffer": cfg.buffer,
        "seed": cfg.seed,
        "steps": result.steps,
    }
    ck_path = os.path.join(out, cfg.checkpoint)
    save_checkpoint(ck_path, model, meta)
    print(
        f"trained {result.steps} steps; best epoch {ck.epoch} "
        f"(val PSNR {ck.metrics['psnr']:.3f} dB, SSIM {ck.metrics['ssim']:.4f}); checkpoint {ck_path}"
    )
    return 0


def cmd_reconstruct(args):
    out = args.output or args.out
    if not out:
        raise CommandError("no output path given")
    model, meta = load_checkpoint(args.checkpoint)
    ratio = args.ratio or DownsamplingRatio.parse(meta.get("ratio", "5x1"))
    img = read_image(args.input)
    sparse = img if args.sparse else make_sparse_input(img, ratio)
    tile = meta.get("tile", 128)
    buffer = meta.get("buffer", 20)
    recon = np.clip(patchwork_reconstruct(model, sparse, tile, buffer), 0.0, 1.0)
    _ensure_parent(out)
    write_image(out, recon, bit_depth=_bit_depth_for(out, args.input))
    print(f"reconstructed {img.shape[0]}x{img.shape[1]} image at ratio {ratio} -> {out}")
    return 0


def _collect(path):
    """Map file stem -> path for a single image or a directory of images."""
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if is_supported(n))
        return {os.path.splitext(n)[0]: os.path.join(path, n) for n in names}
    if not os.path.exists(path):
        raise CommandError(f"not found: {path}")
    return {os.path.splitext(os.path.basename(path))[0]: path}


def evaluate_pairs(truth_path, recon_paths, methods=None, baseline_ratio=None):
    """Rows ``(image, method, psnr, ssim, mae, mse)`` plus per-method summaries."""
    truths = _collect(truth_path)
    single = len(truths) == 1
    methods = methods or [os.path.basename(os.path.normpath(p)) for p in recon_paths]
    rows, per_method, warnings = [], {}, []
    jobs = [(m, _collect(p)) for m, p in zip(methods, recon_paths)]
    if baseline_ratio is not None:
        jobs.append(("bicubic", None))
    for method, recons in jobs:
        reports = []
        for stem, tpath in truths.items():
            truth = read_image(tpath)
            if recons is None:
                recon = bicubic_upsample(downsample(truth, baseline_ratio))
            else:
                rpath = recons.get(stem)
                if rpath is None and single and len(recons) == 1:
                    rpath = next(iter(recons.values()))
                if rpath is None:
                    warnings.append(f"{method}: no reconstruction for {stem}")
                    continue
                recon = read_image(rpath)
            if recon.shape != truth.shape:
                warnings.append(f"{method}: {stem} shape {recon.shape} != truth {truth.shape}")
                continue
            rep = compute_metrics(truth, recon)
            reports.append(rep)
            rows.append((stem, method, rep))
        if reports:
            per_method[method] = summarize(reports)
    return rows, per_method, warnings


def _fmt(v):
    return "inf" if np.isinf(v) else f"{v:.6f}"


def cmd_evaluate(args):
    rows, summary, warnings = evaluate_pairs(args.truth, args.recon, args.method, args.baseline_ratio)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if not rows:
        raise CommandError("no matched truth/reconstruction pairs")
    report = args.report or args.out
    if report:
        _ensure_parent(report)
    fh = open(report, "w", newline="", encoding="utf-8") if report else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image", "method", "psnr", "ssim", "mae", "mse"])
        for stem, method, rep in rows:
            writer.writerow([stem, method] + [_fmt(v) for v in (rep.psnr, rep.ssim, rep.mae, rep.mse)])
        for method, (mean, sd) in summary.items():
            writer.writerow(["MEAN", method] + [_fmt(getattr(mean, k)) for k in ("psnr", "ssim", "mae", "mse")])
            writer.writerow(["SD", method] + [_fmt(getattr(sd, k)) for k in ("psnr", "ssim", "mae", "mse")])
    finally:
        if report:
            fh.close()
    return 0


# ------------------------------------------------------------------ parser


def build_parser():
    return _build()[0]


def _build():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (key = value lines)")
    common.add_argument("--seed", type=int, help="root seed; overrides the config")
    common.add_argument("--out", help="output path or directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="pamrecon", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {}

    p = commands["ingest"] = sub.add_parser("ingest", parents=[common], help="preprocess a directory of images into a manifest")
    p.add_argument("src", help="directory of .png / .pamimg images")
    p.add_argument("--floor", type=float, default=0.0, help="noise floor zeroed before filtering")
    p.set_defaults(func=cmd_ingest)

    p = commands["phantom"] = sub.add_parser("phantom", parents=[common], help="generate synthetic vessel phantoms")
    p.add_argument("--count", type=int, help="number of images (config phantom_count)")
    p.add_argument("--size", type=int, help="square image side (config phantom_size)")
    p.add_argument("--format", choices=("pamimg", "png"), default="pamimg", help="output file format")
    p.set_defaults(func=cmd_phantom)

    p = commands["downsample"] = sub.add_parser("downsample", parents=[common], help="simulate raster undersampling")
    p.add_argument("input")
    p.add_argument("output", nargs="?", help="output image (or use --out)")
    p.add_argument("--ratio", type=_ratio, required=True, help="stride as SXxSY, e.g. 7x3")
    p.add_argument("--mode", choices=("zerofill", "bicubic", "mask"), default="zerofill")
    p.set_defaults(func=cmd_downsample)

    p = commands["train"] = sub.add_parser("train", parents=[common], help="train a model from a run configuration")
    p.set_defaults(func=cmd_train)

    p = commands["reconstruct"] = sub.add_parser("reconstruct", parents=[common], help="reconstruct an image with a trained checkpoint")
    p.add_argument("input")
    p.add_argument("output", nargs="?", help="output image (or use --out)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ratio", type=_ratio, help="stride; defaults to the checkpoint's training ratio")
    p.add_argument("--sparse", action="store_true", help="input is already zero-filled")
    p.set_defaults(func=cmd_reconstruct)

    p = commands["evaluate"] = sub.add_parser("evaluate", parents=[common], help="PSNR/SSIM/MAE/MSE report against ground truth")
    p.add_argument("truth", help="ground-truth image or directory")
    p.add_argument("recon", nargs="+", help="reconstruction image(s) or directories, one per method")
    p.add_argument("--method", action="append", help="method label per recon argument")
    p.add_argument("--baseline-ratio", type=_ratio, help="also score bicubic upsampling at this ratio")
    p.add_argument("--report", help="CSV output path (default: --out or stdout)")
    p.set_defaults(func=cmd_evaluate)
    return parser, commands


def main(argv=None):
    parser, commands = _build()
    argv = sys.argv[1:] if argv is None else list(argv)
    if argv and argv[0] in commands:
        # positionals may follow options, e.g. ``downsample in.png --ratio 7x3 out.png``
        args = commands[argv[0]].parse_intermixed_args(argv[1:])
        args.command = argv[0]
    else:
        args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "evaluate" and args.method and len(args.method) != len(args.recon):
        commands["evaluate"].error("--method must be given once per recon argument")
    try:
        return args.func(args)
    except (CommandError, ConfigError, CheckpointFormatError, InvalidImageError, ManifestError, OSError, ValueError) as exc:
        name = type(exc).__name__
        print(f"error: {name}: {exc}" if name != "CommandError" else f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
