import math

import numpy as np
import pytest
import torch
from PIL import Image
from torch import nn

from dntsc.alignment import warp
from dntsc.exceptions import ConfigurationError, IngestionError, ParameterError, ShapeError
from dntsc.harness import config as runcfg
from dntsc.harness.cli import main
from dntsc.harness.data import DatasetSpec, load_stereo, stack_pairs, stereo_names, synth_pairs
from dntsc.harness.evaluate import (
    RDPoint,
    match_rate_at_psnr,
    param_count,
    plot,
    points_csv,
    read_points,
)
from dntsc.harness.metrics import PSNR_CAP, bitrate_bpp, ms_ssim, mse, psnr


# -- metrics ------------------------------------------------------------------------

def test_psnr_examples():
    x = np.zeros((8, 8, 3))
    assert psnr(x, x + 0.1) == pytest.approx(20.0)
    assert psnr(x, x) == PSNR_CAP
    assert float(mse(x, x + 0.5)) == pytest.approx(0.25)
    with pytest.raises(ShapeError):
        psnr(x, x[:4])


def test_bitrate():
    assert bitrate_bpp(8192, 64, 128) == 1.0
    with pytest.raises(ParameterError):
        bitrate_bpp(1, 0, 5)


def test_ms_ssim_properties():
    g = torch.Generator().manual_seed(0)
    x = torch.rand(2, 3, 64, 64, generator=g, dtype=torch.float64)
    assert torch.allclose(ms_ssim(x, x), torch.ones(2, dtype=torch.float64))
    small = ms_ssim(x, (x + 0.02 * torch.randn(x.shape, generator=g, dtype=x.dtype)).clamp(0, 1))
    big = ms_ssim(x, (x + 0.2 * torch.randn(x.shape, generator=g, dtype=x.dtype)).clamp(0, 1))
    assert torch.all(big < small) and torch.all(small < 1)
    y = x.flip(-1)
    assert torch.allclose(ms_ssim(x, y), ms_ssim(y, x))


def test_ms_ssim_is_differentiable_on_small_images():
    x = torch.rand(1, 3, 16, 32, dtype=torch.float64)
    y = torch.rand(1, 3, 16, 32, dtype=torch.float64, requires_grad=True)
    ms_ssim(x, y).sum().backward()
    assert torch.isfinite(y.grad).all()


# -- data ---------------------------------------------------------------------------

def _write_pairs(root, names_left, names_right, size):
    for side, names in (("left", names_left), ("right", names_right)):
        (root / side).mkdir(parents=True, exist_ok=True)
        for i, n in enumerate(names):
            arr = np.full((size[0], size[1], 3), 40 * i % 255, np.uint8)
            Image.fromarray(arr).save(root / side / n)


def test_kitti_recipe_shapes(tmp_path):
    _write_pairs(tmp_path, ["a.png", "b.png"], ["a.png", "b.png"], (375, 1242))
    pairs = list(load_stereo(DatasetSpec(str(tmp_path), "kitti")))
    assert [p.name for p in pairs] == ["a.png", "b.png"]
    assert pairs[0].x1.shape == (128, 256, 3) and pairs[0].x2.shape == (128, 256, 3)
    assert 0 <= pairs[0].x1.min() and pairs[0].x1.max() <= 1


def test_cityscapes_recipe_shapes(tmp_path):
    _write_pairs(tmp_path / "train", ["c.png"], ["c.png"], (256, 512))
    pairs = list(load_stereo(DatasetSpec(str(tmp_path), "cityscapes", split="train")))
    assert pairs[0].x1.shape == (128, 256, 3)


def test_ingestion_errors(tmp_path):
    (tmp_path / "left").mkdir()
    (tmp_path / "right").mkdir()
    with pytest.raises(IngestionError):
        stereo_names(DatasetSpec(str(tmp_path)))
    _write_pairs(tmp_path, ["a.png", "b.png"], ["a.png", "z.png"], (8, 8))
    with pytest.raises(IngestionError) as info:
        stereo_names(DatasetSpec(str(tmp_path)))
    assert info.value.offenders == ["b.png", "z.png"]
    with pytest.raises(IngestionError):
        stereo_names(DatasetSpec(str(tmp_path / "missing")))
    small = tmp_path / "small"
    _write_pairs(small, ["a.png"], ["a.png"], (100, 100))
    with pytest.raises(IngestionError):
        list(load_stereo(DatasetSpec(str(small), "kitti")))
    with pytest.raises(ConfigurationError):
        DatasetSpec(str(tmp_path), "middlebury")


def test_shuffle_is_seeded(tmp_path):
    names = [f"{i:02d}.png" for i in range(8)]
    _write_pairs(tmp_path, names, names, (8, 8))
    a = [n for n, _, _ in stereo_names(DatasetSpec(str(tmp_path), shuffle_seed=3))]
    b = [n for n, _, _ in stereo_names(DatasetSpec(str(tmp_path), shuffle_seed=3))]
    assert a == b and sorted(a) == names and a != names


def test_synth_pairs_deterministic_and_aligned():
    a = list(synth_pairs(3, (32, 64), seed=9))
    b = list(synth_pairs(3, (32, 64), seed=9))
    for p, q in zip(a, b):
        assert np.array_equal(p.x1, q.x1) and np.array_equal(p.x2, q.x2)
    clean = list(synth_pairs(4, (32, 64), noise_level=0.0, seed=2))
    for p in clean:
        x2 = torch.tensor(p.x2.transpose(2, 0, 1))[None]
        back = warp(x2, torch.tensor(p.homography))[0].numpy().transpose(1, 2, 0)
        inner = (slice(4, -4), slice(8, -8))
        raw = np.mean((p.x2[inner] - p.x1[inner]) ** 2)
        aligned = np.mean((back[inner] - p.x1[inner]) ** 2)
        assert aligned < 0.05 * raw
    x1, x2 = stack_pairs(a)
    assert x1.shape == (3, 3, 32, 64) and x1.dtype == torch.float32
    with pytest.raises(IngestionError):
        stack_pairs([])


# -- evaluation helpers -------------------------------------------------------------

def test_param_count_matches_hand_count():
    net = nn.Sequential(nn.Linear(3, 4), nn.Conv2d(2, 5, 3))
    table = param_count(net)
    assert table["0"] == 3 * 4 + 4
    assert table["1"] == 5 * 2 * 9 + 5
    assert table["total"] == 16 + 95


def _pt(label, rate, p, user="mean"):
    return RDPoint(label, "ntsc", user, rate, rate, rate, p, 0.9, float("nan"), 0, 4)


def test_points_csv_roundtrip(tmp_path):
    pts = [_pt("a", 0.1234567890123, 30.5), _pt("b", 0.5, 33.25, "1")]
    path = tmp_path / "p.csv"
    points_csv(pts, path)
    back = read_points(path)
    assert back[0].rate == pts[0].rate and back[1].user == "1"
    assert math.isnan(back[0].snr_db)


def test_plot_is_byte_identical(tmp_path):
    pts = [_pt("a", 0.1, 28.0), _pt("a", 0.3, 31.0), _pt("b", 0.2, 29.0)]
    for fmt in ("png", "svg"):
        p1, p2 = tmp_path / f"1.{fmt}", tmp_path / f"2.{fmt}"
        plot(pts, p1, title="t")
        plot(pts, p2, title="t")
        assert p1.read_bytes() == p2.read_bytes()


def test_match_rate_at_psnr():
    b = [_pt("b", 0.1, 28.0), _pt("b", 0.4, 32.0)]
    a = [_pt("a", 0.18, 30.0), _pt("a", 0.1, 40.0)]
    out = match_rate_at_psnr(a, b)
    assert out[0] == pytest.approx(100 * (1 - 0.18 / 0.2))
    assert out[1] is None
    edge = match_rate_at_psnr([_pt("a", 0.09, 27.95)], b)[0]
    assert edge is not None and edge > 0


# -- run configuration and CLI ------------------------------------------------------

def test_config_parsing(tmp_path):
    text = "# comment\nepochs = 3\nchannels = 8,8,8,8  # inline\njoint_hyper = false\nsnr_db_user2 = \n"
    parsed = runcfg.parse_lines(text)
    assert parsed == {"epochs": 3, "channels": (8, 8, 8, 8), "joint_hyper": False, "snr_db_user2": None}
    path = tmp_path / "run.cfg"
    path.write_text(text)
    cfg = runcfg.resolve(path, ["epochs=5", "weight=2.5"])
    assert cfg["epochs"] == 5 and cfg["weight"] == 2.5 and cfg["seed"] == 0
    assert runcfg.parse_lines(runcfg.dumps(cfg)) == cfg
    for bad in ("nokey", "epochs = x", "unknown = 1", "joint_hyper = maybe"):
        with pytest.raises(ConfigurationError):
            runcfg.parse_lines(bad)
    with pytest.raises(ConfigurationError):
        runcfg.resolve(tmp_path / "missing.cfg")
    with pytest.raises(ConfigurationError):
        runcfg.resolve(None, ["epochs"])


def test_cli_reports_errors_with_exit_code(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o")]) == 2
    assert "not found" in capsys.readouterr().err


def test_cli_synth_writes_pairs(tmp_path):
    out = tmp_path / "s"
    assert main(["synth", "--n", "2", "--set", "synth_height=16", "--set", "synth_width=32", "--out", str(out)]) == 0
    assert len(list((out / "left").glob("*.png"))) == 2
    assert (out / "manifest.json").exists()
