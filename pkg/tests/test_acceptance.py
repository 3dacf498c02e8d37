"""The ten acceptance criteria, each reported as one PASS/FAIL line.

Lines are printed as each test finishes and repeated in the pytest terminal
summary (see conftest.py).
"""
import time

import numpy as np
import pytest

from oracles import brute_mae, brute_mse, brute_psnr, brute_ssim, naive_fmae, numeric_grad, rel_error
from pamrecon.augment import AugmentConfig
from pamrecon.cli import main as cli_main
from pamrecon.dataset import Manifest
from pamrecon.losses import loss_fmae
from pamrecon.metrics import compute_metrics, ssim
from pamrecon.nn import ELU, BatchNorm, Conv2D, DenseBlock, DownBlock, ModelConfig, UpBlock, build_model
from pamrecon.patchwork import patchwork_reconstruct, plan_patches
from pamrecon.phantom import PhantomConfig, generate_phantoms
from pamrecon.sampling import DownsamplingRatio, bicubic_upsample, downsample, make_sparse_input, sample_mask, zero_fill
from pamrecon.training import TrainConfig, fit, saving_metric, split_dataset

RESULTS = []


def report(n, ok, detail):
    line = f"acceptance {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_01_metric_oracles():
    t = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = {"psnr": 0.0, "ssim": 0.0, "mae": 0.0, "mse": 0.0}
    for _ in range(20):
        a = rng.random((32, 32))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        rep = compute_metrics(a, b)
        for key, ref in (("psnr", brute_psnr(a, b)), ("ssim", brute_ssim(a, b)), ("mae", brute_mae(a, b)), ("mse", brute_mse(a, b))):
            worst[key] = max(worst[key], abs(getattr(rep, key) - ref) / abs(ref))
    c1 = 0.01**2
    closed = c1 / (1 + c1)
    const_err = abs(ssim(np.zeros((32, 32)), np.ones((32, 32))) - closed)
    elapsed = time.perf_counter() - t
    ok = (
        max(worst["psnr"], worst["mae"], worst["mse"]) < 1e-6
        and worst["ssim"] < 1e-4
        and const_err < 1e-6
        and elapsed < 5
    )
    detail = ", ".join(f"{k} rel {v:.1e}" for k, v in worst.items())
    report(1, ok, f"{detail}; constant SSIM err {const_err:.1e}; {elapsed:.2f}s")


def test_02_sampling_roundtrip():
    t = time.perf_counter()
    rng = np.random.default_rng(102)
    bad = 0
    for _ in range(50):
        h, w = rng.integers(1, 80, size=2)
        ratio = DownsamplingRatio(int(rng.integers(1, 13)), int(rng.integers(1, 13)))
        img = rng.random((h, w))
        filled = zero_fill(downsample(img, ratio))
        mask = sample_mask(ratio, h, w).astype(bool)
        if not (np.array_equal(filled[mask], img[mask]) and np.all(filled[~mask] == 0)):
            bad += 1
    elapsed = time.perf_counter() - t
    report(2, bad == 0 and elapsed < 5, f"{50 - bad}/50 exact round trips; {elapsed:.2f}s")


def test_03_fourier_loss():
    rng = np.random.default_rng(103)
    a = rng.random((4, 24, 24, 1))
    self_loss = loss_fmae(a, a)
    shift_worst = 0.0
    for i in range(10):
        img = rng.random((1, 20 + i, 17 + 2 * i, 1))
        shifted = np.roll(img, (int(rng.integers(1, 10)), int(rng.integers(1, 10))), axis=(1, 2))
        shift_worst = max(shift_worst, loss_fmae(img, shifted))
    x, y = rng.random((2, 4, 4, 1)), rng.random((2, 4, 4, 1))
    naive_err = abs(loss_fmae(x, y) - naive_fmae(x, y))
    ok = self_loss == 0 and shift_worst < 1e-6 and naive_err < 1e-4
    report(3, ok, f"self {self_loss:.1e}, worst shift {shift_worst:.1e}, naive DFT diff {naive_err:.1e}")


def _grad_error(mod, x, training=True, skip=None, seed=0):
    mod.astype(np.float64)
    proj = np.random.default_rng(seed).standard_normal(mod.forward(x, *([skip] if skip is not None else []), training=training).shape)

    def f():
        args = (x, skip) if skip is not None else (x,)
        return float((mod.forward(*args, training=training) * proj).sum())

    f()
    g = mod.backward(proj)
    errs = []
    if isinstance(g, tuple):
        g, gs = g
        errs.append(rel_error(gs, numeric_grad(f, skip)))
    errs.append(rel_error(g, numeric_grad(f, x)))
    grads = dict(mod.named_grads())
    errs += [rel_error(grads[n], numeric_grad(f, p)) for n, p in mod.named_parameters()]
    return max(errs)


def test_04_gradient_checks():
    t = time.perf_counter()
    rng = np.random.default_rng(104)
    r = lambda *s: rng.standard_normal(s)  # noqa: E731
    checks = {
        "conv s1": _grad_error(Conv2D(3, 4, 3, 1, rng), r(2, 7, 6, 3)),
        "conv s2": _grad_error(Conv2D(3, 4, 3, 2, rng), r(2, 8, 7, 3)),
        "batchnorm": _grad_error(BatchNorm(3), r(4, 5, 5, 3)),
        "elu": _grad_error(ELU(), r(2, 5, 5, 3)),
        "dense": _grad_error(DenseBlock(4, rng=rng), r(2, 5, 5, 4)),
        "down": _grad_error(DownBlock(4, rng), r(2, 6, 6, 4)),
        "up": _grad_error(UpBlock(4, 4, 4, DenseBlock(4, rng=rng), rng), r(2, 3, 3, 4), skip=r(2, 6, 6, 4)),
        "fd_unet": _grad_error(build_model(ModelConfig(depth_levels=2, base_filters=4), seed=4), rng.random((1, 16, 16, 1))),
    }
    elapsed = time.perf_counter() - t
    worst = max(checks.values())
    report(4, worst < 1e-3 and elapsed < 120, f"worst relative error {worst:.1e} over {len(checks)} checks; {elapsed:.1f}s")


def test_05_shape_laws():
    t = time.perf_counter()
    model = build_model(ModelConfig())
    rows = model.graph((1, 128, 128, 1))
    ok = rows[-1][-1] == (1, 128, 128, 1)
    dense = [(i, o) for _, kind, i, o in rows if kind == "DenseBlock"]
    downs = [(i, o) for _, kind, i, o in rows if kind == "DownBlock"]
    ok &= all(o[-1] == 2 * i[-1] and o[1:3] == i[1:3] for i, o in dense)
    ok &= all(o[1:3] == (i[1] // 2, i[2] // 2) for i, o in downs)
    first = model.children["enc1"]
    ok &= (first.f_in, first.f_out, first.k) == (32, 64, 8)
    elapsed = time.perf_counter() - t
    ok &= elapsed < 1
    report(5, bool(ok), f"{len(dense)} dense blocks double channels, {len(downs)} down blocks halve dims; {elapsed:.2f}s")


def test_06_saving_metric():
    value = saving_metric(0.9157, 29.40)
    s = np.linspace(0.5, 1.0, 10)
    p = np.linspace(10, 40, 10)
    grid = np.array([[saving_metric(a, b) for b in p] for a in s])
    monotone = np.all(np.diff(grid, axis=0) < 0) and np.all(np.diff(grid, axis=1) < 0)
    report(6, abs(value - 0.12285) <= 1e-5 and monotone, f"(0.9157, 29.40) -> {value:.6f}; monotone on 100-point grid: {monotone}")


def _seam_writer(tiles):
    out = tiles.copy()
    out[:, 0, :] = out[:, -1, :] = 1.0
    out[:, :, 0] = out[:, :, -1] = 1.0
    return out


def test_07_patchwork():
    t = time.perf_counter()
    rng = np.random.default_rng(107)
    exact = dims = clean = 0
    uncorrected = 0
    for _ in range(20):
        h, w = (int(v) for v in rng.integers(1, 701, size=2))
        img = rng.random((h, w)) * 0.9
        out = patchwork_reconstruct(lambda x: x.copy(), img)
        exact += np.array_equal(out, img)
        dims += out.shape == img.shape
        adv = patchwork_reconstruct(_seam_writer, img)
        plan = plan_patches((-(-h // 128) * 128, -(-w // 128) * 128))
        seam = np.zeros(plan.padded_shape, bool)
        for s in plan.row_seams:
            seam[s - 1 : s + 1, :] = True
        for s in plan.col_seams:
            seam[:, s - 1 : s + 1] = True
        seam = seam[:h, :w].copy()
        seam[[0, -1], :] = seam[:, [0, -1]] = False
        n_bad = int(np.sum(adv[seam] == 1.0))
        uncorrected += n_bad
        clean += n_bad == 0
    elapsed = time.perf_counter() - t
    ok = exact == dims == clean == 20 and elapsed < 30
    report(7, ok, f"identity exact {exact}/20, dims kept {dims}/20, uncorrected seam pixels {uncorrected}; {elapsed:.1f}s")


@pytest.mark.slow
def test_08_overfit_smoke():
    t = time.perf_counter()
    ratio = DownsamplingRatio(5, 1)
    images = generate_phantoms(8, PhantomConfig(shape=(128, 128)), seed=3)
    model = build_model(ModelConfig(depth_levels=3, base_filters=16, bn_momentum=0.9), seed=0)
    cfg = TrainConfig(batch_size=16, epochs=1000, ratio=ratio, val_crops=1, max_steps=500, seed=7)
    aug = AugmentConfig(crop=32, max_rotation=0, max_shift_frac=0, max_shear=0, noise_prob=0, seed=7, crops_per_image=10)
    res = fit(model, images, cfg, aug)
    model.load_state_dict(res.checkpoint.state)
    recon = np.clip(model.predict(np.stack([make_sparse_input(im, ratio) for im in images])), 0, 1)
    net = [compute_metrics(im, r) for im, r in zip(images, recon)]
    bic = [compute_metrics(im, bicubic_upsample(downsample(im, ratio))) for im in images]
    mp, ms = np.mean([m.psnr for m in net]), np.mean([m.ssim for m in net])
    bp, bs = np.mean([m.psnr for m in bic]), np.mean([m.ssim for m in bic])
    elapsed = time.perf_counter() - t
    ok = res.steps <= 500 and mp >= bp + 1.0 and ms > bs and elapsed <= 600
    report(
        8, ok,
        f"model {mp:.2f} dB / SSIM {ms:.3f} vs bicubic {bp:.2f} dB / {bs:.3f} "
        f"(+{mp - bp:.2f} dB) after {res.steps} steps; {elapsed:.0f}s",
    )


SMOKE = """
dataset = phantoms
phantom_count = 4
phantom_size = 128
depth_levels = 3
base_filters = 16
bn_momentum = 0.9
crop = 32
tile = 32
buffer = 8
batch_size = 8
crops_per_image = 4
val_crops = 1
epochs = 3
max_steps = 5
ratio = 5x1
seed = 11
"""


def test_09_determinism(tmp_path):
    cfg = tmp_path / "smoke.cfg"
    cfg.write_text(SMOKE)
    probe = tmp_path / "probe.pamimg"
    from pamrecon.image import write_raw

    write_raw(probe, generate_phantoms(1, PhantomConfig(shape=(150, 170)), seed=9)[0])
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli_main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        assert cli_main(["reconstruct", str(probe), str(out / "rec.pamimg"), "--checkpoint", str(out / "checkpoint.pamckpt")]) == 0
        blobs.append(((out / "checkpoint.pamckpt").read_bytes(), (out / "rec.pamimg").read_bytes()))
    same_ckpt = blobs[0][0] == blobs[1][0]
    same_rec = blobs[0][1] == blobs[1][1]
    report(9, same_ckpt and same_rec, f"checkpoints identical: {same_ckpt}, reconstructions identical: {same_rec}")


def test_10_split_rule(tmp_path):
    manifest = Manifest([(f"img_{i:03d}.pamimg", None) for i in range(292)])
    manifest.write(tmp_path / "manifest.txt")
    paths = Manifest.read(tmp_path / "manifest.txt").paths()
    train, val, test = split_dataset(paths, (0.8, 0.1, 0.1), seed=7)
    counts = (len(train), len(val), len(test))
    disjoint = len(set(train) | set(val) | set(test)) == 292
    report(10, counts == (233, 30, 29) and disjoint, f"292 entries -> {counts[0]}/{counts[1]}/{counts[2]}, disjoint: {disjoint}")
