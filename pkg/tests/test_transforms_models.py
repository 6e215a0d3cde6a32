import math

import numpy as np
import pytest
import torch

from dntsc._rounding import round_half_away
from dntsc.channel import ChannelSpec
from dntsc.exceptions import CheckpointError, ConfigurationError, DecodeError, InputError, ShapeError
from dntsc.models import DistributedCodec, NTSCCSystem, NTSCSystem, SystemOptions, build_system
from dntsc.transforms import (
    AnalysisTransform,
    HyperAnalysis,
    HyperSynthesis,
    SynthesisTransform,
    TransformConfig,
    hyper_shape,
    latent_grid,
    latent_tokens,
)
from dntsc.transforms.swin import effective_window, window_merge, window_partition

MICRO = TransformConfig.micro()


def _images(n=1, h=16, w=32, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(n, 3, h, w, generator=g), torch.rand(n, 3, h, w, generator=g)


# -- transforms ---------------------------------------------------------------------

@pytest.mark.parametrize("preset,hw", [("micro", (16, 32)), ("desk", (64, 128)), ("full", (32, 64))])
def test_transform_shapes(preset, hw):
    cfg = getattr(TransformConfig, preset)()
    torch.manual_seed(0)
    x = torch.rand(2, 3, *hw)
    y = AnalysisTransform(cfg)(x)
    h, w = hw[0] // 16, hw[1] // 16
    assert y.shape == (2, cfg.latent_channels, h, w)
    z = HyperAnalysis(cfg)(y)
    assert z.shape == (2, cfg.hyper_channels, *hyper_shape(h, w))
    mu, sigma = HyperSynthesis(cfg)(z, (h, w))
    assert mu.shape == y.shape and torch.all(sigma > 0)
    x_hat = SynthesisTransform(cfg)(y, torch.zeros_like(y))
    x_hat = x_hat.detach()
    assert x_hat.shape == x.shape and float(x_hat.min()) >= 0 and float(x_hat.max()) <= 1


def test_transform_rejects_bad_input():
    net = AnalysisTransform(MICRO)
    with pytest.raises(ShapeError):
        net(torch.rand(1, 3, 20, 32))
    with pytest.raises(ShapeError):
        net(torch.rand(1, 1, 16, 32))
    x = torch.rand(1, 3, 16, 32)
    x[0, 0, 0, 0] = float("nan")
    with pytest.raises(InputError):
        net(x)
    with pytest.raises(ShapeError):
        SynthesisTransform(MICRO)(torch.zeros(1, 8, 1, 2), torch.zeros(1, 8, 2, 2))


@pytest.mark.parametrize("kwargs", [
    dict(channels_per_stage=(8, 8, 8)),
    dict(channels_per_stage=(8, 8, 8, 9), heads_per_stage=(2, 2, 2, 2)),
    dict(patch_size=4),
    dict(hyper_channels=256),
    dict(window_size=0),
])
def test_transform_config_errors(kwargs):
    with pytest.raises(ConfigurationError):
        TransformConfig(**kwargs)


def test_transform_config_dict_roundtrip():
    cfg = TransformConfig.desk(seed=3)
    assert TransformConfig.from_dict(cfg.to_dict()) == cfg


def test_window_partition_roundtrip_and_effective_window():
    x = torch.randn(2, 8, 12, 5)
    for ws in (1, 2, 4):
        assert torch.equal(window_merge(window_partition(x, ws), ws, 2, 8, 12), x)
    assert effective_window(4, 8, 4) == 4
    assert effective_window(1, 2, 4) == 1
    assert effective_window(6, 9, 4) == 3


def test_latent_token_views():
    y = torch.randn(2, 5, 3, 4)
    t = latent_tokens(y)
    assert t.shape == (2, 12, 5)
    assert torch.equal(t[0, 4], y[0, :, 1, 0])
    assert torch.equal(latent_grid(t, 3, 4), y)
    with pytest.raises(ShapeError):
        latent_grid(t, 4, 4)


# -- systems ------------------------------------------------------------------------

def test_options_validation():
    with pytest.raises(ConfigurationError):
        SystemOptions(kind="other")
    with pytest.raises(ConfigurationError):
        SystemOptions(K=0)
    with pytest.raises(ConfigurationError):
        SystemOptions(eta=0.0)


def test_construction_is_seeded_and_tied():
    a, b = NTSCSystem(MICRO), NTSCSystem(MICRO)
    for (k, va), vb in zip(a.state_dict().items(), b.state_dict().values()):
        assert torch.equal(va, vb), k
    for m1, m2 in a._user_pairs():
        for (k, p1), p2 in zip(m1.state_dict().items(), m2.state_dict().values()):
            assert torch.equal(p1, p2), k
    untied = NTSCSystem(MICRO, SystemOptions(tied_init=False))
    assert not torch.equal(untied.ga1.embed.weight, untied.ga2.embed.weight)


def test_forward_outputs_and_rates():
    m = NTSCSystem(MICRO, SystemOptions(K=2))
    x1, x2 = _images(2)
    out = m(x1, x2, torch.Generator().manual_seed(0))
    assert out["x_hat1"].shape == x1.shape
    assert out["bits_y1"].shape[0] == 2 and torch.all(out["bits_y1"] >= 0)
    assert out["bits_z"].shape[0] == 2 and torch.all(out["bits_z"] >= 0)
    assert out["M1"].shape == (2, 3, 3)


def test_side_info_disabled_uses_zeros():
    m = NTSCSystem(MICRO, SystemOptions(side_info=False))
    y = torch.randn(1, 8, 1, 2)
    si, M = m.side_information(y, y, 1)
    assert M is None and torch.equal(si, torch.zeros_like(y))


@pytest.mark.parametrize("joint", [True, False])
def test_compress_roundtrip_matches_quantized_reconstruction(joint):
    m = NTSCSystem(MICRO, SystemOptions(joint_hyper=joint, K=2)).eval()
    x1, x2 = _images(1, seed=1)
    s1, s2, acct = m.compress(x1, x2)
    h1, h2 = m.decompress(s1.tobytes(), s2.tobytes())
    with torch.no_grad():
        y1, y2 = round_half_away(m.analysis(x1, 1)), round_half_away(m.analysis(x2, 2))
        r1, r2, _ = m.reconstruct(y1, y2)
    assert torch.equal(h1, r1) and torch.equal(h2, r2)
    for u in (1, 2):
        assert acct[f"actual_bits{u}"] == 8 * len((s1, s2)[u - 1])
        assert acct[f"total_bits{u}"] == pytest.approx(acct[f"latent_bits{u}"] + acct["hyper_joint_bits"] / 2)
        assert acct[f"accounting_bpp{u}"] == pytest.approx(acct[f"total_bits{u}"] / (16 * 32))


def test_decompress_rejects_swapped_or_corrupt_streams():
    m = NTSCSystem(MICRO).eval()
    x1, x2 = _images(1, seed=2)
    s1, s2, _ = m.compress(x1, x2)
    with pytest.raises(DecodeError):
        m.decompress(s2, s1)
    bad = bytearray(s1.tobytes())
    bad[-1] ^= 0xFF
    with pytest.raises(DecodeError):
        m.decompress(bytes(bad), s2)


def test_compress_requires_single_pair():
    m = NTSCSystem(MICRO)
    x1, x2 = _images(2)
    with pytest.raises(ShapeError):
        m.compress(x1, x2)


def test_checkpoint_roundtrip(tmp_path):
    m = NTSCSystem(MICRO, SystemOptions(K=2, joint_hyper=False))
    with torch.no_grad():
        for p in m.parameters():
            p.add_(0.01)
    path = tmp_path / "m.dntx"
    m.save(path, meta={"epoch": 3}, extra_tensors={"optim/x": torch.ones(2)})
    back, meta, extras = DistributedCodec.load(path, with_extras=True)
    assert isinstance(back, NTSCSystem) and back.options == m.options and back.cfg == m.cfg
    assert meta == {"epoch": 3} and torch.equal(extras["optim/x"], torch.ones(2))
    for (k, a), b in zip(m.state_dict().items(), back.state_dict().values()):
        assert torch.equal(a, b), k


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        DistributedCodec.load(tmp_path / "missing.dntx")
    (tmp_path / "junk.dntx").write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        DistributedCodec.load(tmp_path / "junk.dntx")
    m = NTSCSystem(MICRO)
    from dntsc import checkpoint
    tensors = dict(m.state_dict())
    tensors.pop(next(iter(tensors)))
    checkpoint.save(tmp_path / "partial.dntx", tensors, m.config_dict())
    with pytest.raises(CheckpointError):
        DistributedCodec.load(tmp_path / "partial.dntx")


def test_build_system_dispatch():
    m = NTSCSystem(MICRO)
    assert isinstance(build_system(m.config_dict()), NTSCSystem)
    c = NTSCCSystem(MICRO, SystemOptions(kind="ntscc", bandwidths=(8, 16), jscc_width=8, jscc_heads=2))
    assert isinstance(build_system(c.config_dict()), NTSCCSystem)


def _ntscc(side_info=True):
    return NTSCCSystem(MICRO, SystemOptions(kind="ntscc", side_info=side_info, bandwidths=(8, 16, 24),
                                            jscc_width=8, jscc_heads=2))


def test_ntscc_simulate_rates_and_power():
    m = _ntscc().eval()
    x1, x2 = _images(2, seed=3)
    spec = ChannelSpec(5.0, seed=1)
    h1, h2, rates, tx, rx = m.simulate(x1, x2, spec)
    assert h1.shape == x1.shape and len(rates) == 2
    for i, r in enumerate(rates):
        for u in (1, 2):
            plan = tx[u - 1][i]
            assert r[f"n{u}"] == plan.n
            assert r[f"power{u}"] == pytest.approx(1.0, rel=1e-5)
            cap = math.log2(1 + 10 ** 0.5)
            expected = (plan.n + r["hyper_joint_bits"] / (2 * cap)) / (3 * 16 * 32)
            assert r[f"r{u}"] == pytest.approx(expected)


def test_ntscc_simulation_is_reproducible_and_noiseless_limit():
    m = _ntscc().eval()
    x1, x2 = _images(1, seed=4)
    a = m.simulate(x1, x2, ChannelSpec(5.0, seed=2))
    b = m.simulate(x1, x2, ChannelSpec(5.0, seed=2))
    assert torch.equal(a[0], b[0]) and torch.equal(a[1], b[1])
    c = m.simulate(x1, x2, ChannelSpec(5.0, seed=3))
    assert not torch.equal(a[0], c[0])


def test_ntscc_forward_is_differentiable():
    m = _ntscc()
    x1, x2 = _images(2, seed=5)
    out = m(x1, x2, ChannelSpec(5.0), torch.Generator().manual_seed(0))
    loss = out["x_hat1"].mean() + out["bits_y1"].sum() + out["bits_z"].sum()
    loss.backward()
    assert m.fe1.inp.weight.grad is not None and torch.isfinite(m.fe1.inp.weight.grad).all()
    assert np.isfinite(float(loss.detach()))
