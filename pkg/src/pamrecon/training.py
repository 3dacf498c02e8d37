"""Training loop, dataset split and checkpoint selection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentConfig, augment_sample, validation_crops
from .image import check_image, pad_to_multiple
from .losses import loss_total, loss_total_grad
from .metrics import compute_metrics
from .optim import Adam
from .sampling import DownsamplingRatio, make_sparse_input

log = logging.getLogger(__name__)

PSNR_LIMIT = 40.0
PSNR_SCALE = 275.0

_STREAMS = {"split": 1, "augment": 2, "init": 3, "order": 4}


def seed_stream(seed, purpose):
    """Independent generator for one purpose derived from a root seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAMS[purpose]]))


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 500
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-7
    lambda1: float = 1.0
    lambda2: float = 0.01
    ratio: DownsamplingRatio = DownsamplingRatio(5, 1)
    crops_per_image: int = 10
    split: tuple = (0.8, 0.1, 0.1)
    seed: int = 7
    val_crops: int = 10
    max_steps: int = 0  # 0 means no cap


@dataclass
class Checkpoint:
    state: dict
    epoch: int
    metrics: dict
    saving_metric: float


@dataclass
class FitResult:
    checkpoint: Checkpoint
    log: list = field(default_factory=list)
    steps: int = 0
    step_losses: list = field(default_factory=list)


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, dump):
        super().__init__(message)
        self.dump = dump


def saving_metric(ssim, psnr):
    """``(1 - ssim) + (40 - psnr) / 275``; lower is better. Infinite PSNR counts as 40."""
    if math.isinf(psnr) and psnr > 0:
        psnr = PSNR_LIMIT
    return (1.0 - ssim) + (PSNR_LIMIT - psnr) / PSNR_SCALE


def split_counts(n, fractions):
    """Floor each share, then hand leftovers out starting at the second split."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    counts = [math.floor(f * n + 1e-9) for f in fractions]
    k = len(counts)
    i = 1 % k
    for _ in range(n - sum(counts)):
        counts[i] += 1
        i = (i + 1) % k
    return counts


def split_dataset(items, fractions=(0.8, 0.1, 0.1), seed=7):
    """Deterministic shuffled split into ``len(fractions)`` parts."""
    items = list(items)
    if not items:
        raise ValueError("cannot split an empty dataset")
    counts = split_counts(len(items), fractions)
    order = seed_stream(seed, "split").permutation(len(items))
    parts, start = [], 0
    for c in counts:
        parts.append([items[i] for i in order[start : start + c]])
        start += c
    return tuple(parts)


def _params_and_grads(model):
    params = dict(model.named_parameters())
    grads = dict(model.named_grads())
    return params, grads


def _stack(images, dtype):
    return np.stack(images).astype(dtype)[..., None]


def evaluate_crops(model, crops, ratio, batch_size=16):
    """Mean PSNR/SSIM of the model on zero-filled versions of ``crops``."""
    psnrs, ssims = [], []
    for start in range(0, len(crops), batch_size):
        truth = crops[start : start + batch_size]
        x = np.stack([make_sparse_input(t, ratio) for t in truth])
        out = model.predict(x)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite model output during validation")
        for t, r in zip(truth, out):
            rep = compute_metrics(t, np.clip(r, 0.0, 1.0))
            psnrs.append(min(rep.psnr, 1e9))
            ssims.append(rep.ssim)
    return {"psnr": float(np.mean(psnrs)), "ssim": float(np.mean(ssims))}


def _write_log_record(fh, rec):
    fh.write(
        f"{rec['epoch']},{rec['train_loss']:.8g},{rec['val_psnr']:.6f},"
        f"{rec['val_ssim']:.6f},{rec['saving_metric']:.8f}\n"
    )
    fh.flush()


def fit(model, train_images, cfg=None, aug_cfg=None, val_images=None, log_path=None):
    """Train ``model`` in place and return the best checkpoint plus the epoch log.

    Training pairs are augmented fully-sampled crops and their zero-filled
    decimations. Validation uses ``val_images`` (or the training images when
    none are given): a centre crop plus seeded random crops per image, fixed
    across epochs. The checkpoint keeps the state with the lowest saving
    metric seen so far, including the initial state.
    """
    cfg = cfg or TrainConfig()
    aug_cfg = aug_cfg or AugmentConfig(seed=cfg.seed, crops_per_image=cfg.crops_per_image)
    if not train_images:
        raise ValueError("training set is empty")
    crop = aug_cfg.crop
    train = [pad_to_multiple(check_image(im), crop)[0] for im in train_images]
    val_src = val_images if val_images else train_images
    val = [pad_to_multiple(check_image(im), crop)[0] for im in val_src]
    val_sets = [c for i, im in enumerate(val) for c in validation_crops(im, crop, cfg.val_crops, cfg.seed + i)]

    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_epsilon)
    aug_rng = seed_stream(aug_cfg.seed, "augment")
    order_rng = seed_stream(cfg.seed, "order")
    dtype = model.dtype

    def diverged(message, epoch, step, loss):
        params, _ = _params_and_grads(model)
        dump = {
            "epoch": epoch,
            "step": step,
            "loss": loss,
            "param_norms": {k: float(np.linalg.norm(v)) for k, v in params.items()},
        }
        return TrainingDivergedError(message, dump)

    def snapshot(epoch):
        try:
            m = evaluate_crops(model, val_sets, cfg.ratio)
        except FloatingPointError as exc:
            raise diverged(f"{exc} at epoch {epoch}", epoch, step, float("nan")) from None
        return Checkpoint(model.state_dict(), epoch, m, saving_metric(m["ssim"], m["psnr"]))

    step = 0
    best = snapshot(0)
    records = []
    step_losses = []
    fh = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            targets = []
            for idx in order_rng.permutation(len(train)):
                targets.extend(augment_sample(train[idx], aug_cfg, aug_rng) for _ in range(aug_cfg.crops_per_image))
            targets = [targets[i] for i in order_rng.permutation(len(targets))]
            losses = []
            for start in range(0, len(targets), cfg.batch_size):
                if cfg.max_steps and step >= cfg.max_steps:
                    break
                batch = targets[start : start + cfg.batch_size]
                y = _stack(batch, dtype)
                x = _stack([make_sparse_input(t, cfg.ratio) for t in batch], dtype)
                out = model.forward(x, training=True)
                loss = loss_total(y, out, cfg.lambda1, cfg.lambda2)
                if not np.isfinite(loss):
                    raise diverged(f"non-finite loss at epoch {epoch}, step {step}", epoch, step, loss)
                model.backward(loss_total_grad(y, out, cfg.lambda1, cfg.lambda2))
                opt.step(*_params_and_grads(model))
                losses.append(loss)
                step_losses.append(loss)
                step += 1
            if not losses:
                break
            cand = snapshot(epoch)
            rec = {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "val_psnr": cand.metrics["psnr"],
                "val_ssim": cand.metrics["ssim"],
                "saving_metric": cand.saving_metric,
            }
            records.append(rec)
            if fh:
                _write_log_record(fh, rec)
            log.info("epoch %d loss %.5f psnr %.3f ssim %.4f", epoch, rec["train_loss"], rec["val_psnr"], rec["val_ssim"])
            if cand.saving_metric < best.saving_metric:
                best = cand
            if cfg.max_steps and step >= cfg.max_steps:
                break
    finally:
        if fh:
            fh.close()
    return FitResult(best, records, step, step_losses)
