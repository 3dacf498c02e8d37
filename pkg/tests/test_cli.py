import csv
import os

import numpy as np
import pytest

from pamrecon.cli import build_parser, main
from pamrecon.config import RunConfig, format_config, load_config, parse_config_text
from pamrecon.image import read_image, write_png
from pamrecon.nn import ConfigError, ModelConfig, build_model, save_checkpoint
from pamrecon.patchwork import patchwork_reconstruct
from pamrecon.sampling import make_sparse_input

SMALL = """
# tiny run for tests
architecture = fd_unet
depth_levels = 2
base_filters = 4
crop = 16
tile = 16
buffer = 4
batch_size = 2
epochs = 1
crops_per_image = 1
val_crops = 1
ratio = 2x1
dataset = phantoms
phantom_count = 2
phantom_size = 128
"""


def write_config(tmp_path, text=SMALL, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# --------------------------------------------------------------- config


def test_config_defaults_match_training_defaults():
    cfg = RunConfig()
    assert (cfg.batch_size, cfg.epochs, cfg.lr, cfg.adam_epsilon) == (16, 500, 0.001, 1e-7)
    assert (cfg.lambda1, cfg.lambda2, cfg.bn_momentum, cfg.bn_epsilon) == (1.0, 0.01, 0.99, 0.001)
    assert str(cfg.ratio) == "5x1" and cfg.split == (0.8, 0.1, 0.1)
    assert cfg.model_config() == ModelConfig()


def test_config_parse_and_roundtrip():
    cfg = parse_config_text(SMALL)
    assert cfg.depth_levels == 2 and cfg.ratio.sx == 2 and cfg.dataset == "phantoms"
    assert parse_config_text(format_config(cfg)) == cfg


@pytest.mark.parametrize(
    "text,needle",
    [
        ("depth_levels = 2\nlearning_rat = 0.1\n", ":2: unknown key 'learning_rat'"),
        ("epochs = many\n", ":1: bad value for 'epochs'"),
        ("ratio = 0x1\n", ":1: bad value for 'ratio'"),
        ("just words\n", ":1: expected 'key = value'"),
        ("seed = 1\nseed = 2\n", ":2: duplicate key 'seed'"),
        ("architecture = resnet\n", "architecture"),
        ("crop = 100\n", "crop must be"),
        ("tile = 100\n", "tile must be"),
    ],
)
def test_config_diagnostics(text, needle):
    with pytest.raises(ConfigError) as err:
        parse_config_text(text, source="run.cfg")
    assert needle in str(err.value)
    assert str(err.value).startswith("run.cfg")


def test_help_exits_zero(capsys):
    for cmd in ("ingest", "phantom", "downsample", "train", "reconstruct", "evaluate"):
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for flag in ("--config", "--seed", "--out"):
            assert flag in out
    parser = build_parser()
    assert parser.prog == "pamrecon"


# ----------------------------------------------------------- downsample


def test_downsample_zerofill_prints_fraction(tmp_path, capsys):
    src = tmp_path / "in.png"
    img = np.random.default_rng(0).random((210, 210))
    write_png(src, img, bit_depth=8)
    out = tmp_path / "out.png"
    assert main(["downsample", str(src), "--ratio", "7x3", "--mode", "zerofill", str(out)]) == 0
    text = capsys.readouterr().out
    assert "asymptotic 4.76%" in text
    res = read_image(out)
    ref = read_image(src)
    np.testing.assert_array_equal(res[::3, ::7], ref[::3, ::7])
    mask = np.zeros(res.shape, bool)
    mask[::3, ::7] = True
    assert np.all(res[~mask] == 0)


def test_downsample_identity_byte_identical(tmp_path):
    from PIL import Image

    for depth in (8, 16):
        src = tmp_path / f"in{depth}.png"
        write_png(src, np.random.default_rng(depth).random((33, 47)), bit_depth=depth)
        out = tmp_path / f"out{depth}.png"
        assert main(["downsample", str(src), str(out), "--ratio", "1x1"]) == 0
        np.testing.assert_array_equal(np.asarray(Image.open(src)), np.asarray(Image.open(out)))


def test_downsample_modes(tmp_path):
    src = tmp_path / "in.pamimg"
    from pamrecon.image import write_raw

    write_raw(src, np.linspace(0, 1, 40 * 30).reshape(40, 30))
    assert main(["downsample", str(src), "--ratio", "5x1", "--mode", "mask", "--out", str(tmp_path / "m.pamimg")]) == 0
    m = read_image(tmp_path / "m.pamimg")
    assert m.sum() == 40 * 6 and np.all(m[:, ::5] == 1)
    assert main(["downsample", str(src), str(tmp_path / "b.pamimg"), "--ratio", "5x1", "--mode", "bicubic"]) == 0
    b = read_image(tmp_path / "b.pamimg")
    assert b.shape == (40, 30) and 0 <= b.min() and b.max() <= 1


def test_downsample_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["downsample", "x.png", "y.png", "--ratio", "0x1"])
    assert exc.value.code != 0
    assert main(["downsample", str(tmp_path / "missing.png"), str(tmp_path / "y.png"), "--ratio", "2x2"]) == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------- train


def test_train_smoke_and_reconstruct(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    ck = out / "checkpoint.pamckpt"
    assert ck.exists()
    lines = (out / "train_log.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_psnr,val_ssim,saving_metric" and len(lines) == 2
    # a second run with the same seed writes the same checkpoint bytes
    out2 = tmp_path / "run2"
    assert main(["train", "--config", cfg, "--out", str(out2)]) == 0
    assert ck.read_bytes() == (out2 / "checkpoint.pamckpt").read_bytes()

    img = np.random.default_rng(3).random((50, 37))
    src = tmp_path / "img.pamimg"
    from pamrecon.image import write_raw

    write_raw(src, img)
    dst = tmp_path / "rec.pamimg"
    assert main(["reconstruct", str(src), str(dst), "--checkpoint", str(ck)]) == 0
    rec = read_image(dst)
    assert rec.shape == img.shape and rec.min() >= 0 and rec.max() <= 1


def test_train_zero_epochs_writes_initial_checkpoint(tmp_path):
    cfg = write_config(tmp_path, SMALL.replace("epochs = 1", "epochs = 0"))
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    from pamrecon.nn import read_checkpoint

    _, _, meta = read_checkpoint(tmp_path / "r" / "checkpoint.pamckpt")
    assert meta["epoch"] == 0 and meta["steps"] == 0


def test_train_missing_dataset(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL.replace("dataset = phantoms", f"dataset = {tmp_path / 'nope'}"))
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "r")]) == 1
    assert "dataset not found" in capsys.readouterr().err


def test_train_bad_config(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL + "colour = blue\n")
    assert main(["train", "--config", cfg]) == 1
    assert "unknown key 'colour'" in capsys.readouterr().err


def test_train_from_phantom_directory(tmp_path):
    assert main(["phantom", "--count", "3", "--size", "128", "--seed", "2", "--out", str(tmp_path / "ph")]) == 0
    assert len(os.listdir(tmp_path / "ph")) == 4
    cfg = write_config(tmp_path, SMALL.replace("dataset = phantoms", f"dataset = {tmp_path / 'ph'}"))
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "r")]) == 0


# ----------------------------------------------------------- reconstruct


@pytest.fixture
def canonical_ckpt(tmp_path):
    model = build_model(ModelConfig(depth_levels=2, base_filters=4), seed=0)
    path = tmp_path / "m.pamckpt"
    save_checkpoint(path, model, {"ratio": "5x1"})
    return model, path


def test_reconstruct_single_tile_matches_direct(tmp_path, canonical_ckpt):
    model, path = canonical_ckpt
    img = np.random.default_rng(1).random((128, 128))
    from pamrecon.image import write_raw

    write_raw(tmp_path / "t.pamimg", img)
    assert main(["reconstruct", str(tmp_path / "t.pamimg"), str(tmp_path / "o.pamimg"), "--checkpoint", str(path)]) == 0
    direct = np.clip(model.predict(make_sparse_input(img, (5, 1))[None])[0], 0, 1)
    np.testing.assert_allclose(read_image(tmp_path / "o.pamimg"), direct, atol=1e-6)


def test_reconstruct_large_image_keeps_dims(tmp_path, canonical_ckpt):
    _, path = canonical_ckpt
    from pamrecon.image import write_raw

    write_raw(tmp_path / "big.pamimg", np.random.default_rng(2).random((1500, 1500)).astype(np.float32))
    assert main(
        ["reconstruct", str(tmp_path / "big.pamimg"), "--out", str(tmp_path / "o.pamimg"), "--checkpoint", str(path), "--sparse"]
    ) == 0
    assert read_image(tmp_path / "o.pamimg").shape == (1500, 1500)


def test_reconstruct_corrupt_checkpoint(tmp_path, capsys):
    bad = tmp_path / "bad.pamckpt"
    bad.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    src = tmp_path / "i.pamimg"
    from pamrecon.image import write_raw

    write_raw(src, np.zeros((8, 8)))
    assert main(["reconstruct", str(src), str(tmp_path / "o.pamimg"), "--checkpoint", str(bad)]) == 1
    assert "CheckpointFormatError" in capsys.readouterr().err


# -------------------------------------------------------------- evaluate


def read_report(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_evaluate_identity_and_single_pair_sd(tmp_path):
    truth = tmp_path / "truth"
    truth.mkdir()
    rng = np.random.default_rng(5)
    for i in range(3):
        write_png(truth / f"im{i}.png", rng.random((40, 40)), bit_depth=16)
    report = tmp_path / "r.csv"
    assert main(["evaluate", str(truth), str(truth), "--method", "same", "--report", str(report)]) == 0
    rows = read_report(report)
    assert rows[0] == ["image", "method", "psnr", "ssim", "mae", "mse"]
    for row in rows[1:4]:
        assert row[2] == "inf" and float(row[3]) == 1.0 and float(row[4]) == 0 and float(row[5]) == 0
    assert [r[0] for r in rows[4:]] == ["MEAN", "SD"]

    single = tmp_path / "s.csv"
    assert main(["evaluate", str(truth / "im0.png"), str(truth / "im0.png"), "--baseline-ratio", "5x1", "--out", str(single)]) == 0
    rows = read_report(single)
    sd_rows = [r for r in rows if r[0] == "SD"]
    assert len(sd_rows) == 2
    for r in sd_rows:
        assert all(float(v) == 0.0 for v in r[2:])
    assert any(r[1] == "bicubic" for r in rows)


def test_evaluate_mismatch_partial_report(tmp_path, capsys):
    truth, recon = tmp_path / "t", tmp_path / "r"
    truth.mkdir()
    recon.mkdir()
    write_png(truth / "a.png", np.zeros((10, 10)))
    write_png(truth / "b.png", np.zeros((10, 10)))
    write_png(recon / "a.png", np.zeros((10, 10)))
    write_png(recon / "b.png", np.zeros((12, 10)))
    assert main(["evaluate", str(truth), str(recon), "--out", str(tmp_path / "rep.csv")]) == 0
    assert "shape" in capsys.readouterr().err
    rows = read_report(tmp_path / "rep.csv")
    assert [r[0] for r in rows[1:]] == ["a", "MEAN", "SD"]


def test_evaluate_no_pairs(tmp_path):
    write_png(tmp_path / "a.png", np.zeros((10, 10)))
    write_png(tmp_path / "b.png", np.zeros((11, 10)))
    assert main(["evaluate", str(tmp_path / "a.png"), str(tmp_path / "b.png")]) == 1


def test_ingest_command(tmp_path, capsys):
    src = tmp_path / "src"
    src.mkdir()
    assert main(["ingest", str(src), "--out", str(tmp_path / "o")]) == 0
    assert "warning" in capsys.readouterr().err
    assert main(["ingest", str(tmp_path / "missing")]) == 1


def test_load_config_file(tmp_path):
    cfg = load_config(write_config(tmp_path))
    assert cfg.phantom_count == 2 and cfg.tile == 16
    assert patchwork_reconstruct(lambda t: t, np.ones((20, 20)), cfg.tile, cfg.buffer).shape == (20, 20)


def test_shipped_smoke_config_parses():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    cfg = load_config(os.path.join(root, "configs", "smoke.cfg"))
    assert (cfg.depth_levels, cfg.base_filters, cfg.max_steps, str(cfg.ratio)) == (3, 16, 200, "5x1")
    assert cfg.augment_config().max_rotation == 0
