import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from dntsc.alignment import (
    LocalizationNet,
    TransformationModule,
    bilinear_sample,
    project,
    sampling_grid,
    translation,
    warp,
)
from dntsc.channel import ChannelSpec, awgn_transmit, capacity
from dntsc.exceptions import ConfigurationError, DegenerateProjectionError, FramingError, ParameterError, ShapeError
from dntsc.jscc import (
    DEFAULT_BANDWIDTHS,
    BandwidthSet,
    ChannelVector,
    JSCCDecoder,
    JSCCEncoder,
    RatePlan,
    make_plan,
    power_normalize,
    select_bandwidth,
    transmission_rate,
)


# -- channel ------------------------------------------------------------------------

@pytest.mark.parametrize("snr", [-5.0, 0.0, 10.0, 20.0])
def test_noise_variance_and_capacity(snr):
    spec = ChannelSpec(snr, power=2.0)
    assert spec.noise_variance() == pytest.approx(2.0 * 10 ** (-snr / 10))
    assert capacity(snr) == pytest.approx(math.log2(1 + 10 ** (snr / 10)))


def test_noiseless_channel_is_identity():
    s = torch.randn(50, dtype=torch.complex128)
    assert torch.equal(awgn_transmit(s, ChannelSpec(math.inf)), s)
    with pytest.raises(ParameterError):
        capacity(math.inf)


def test_channel_spec_validation():
    with pytest.raises(ParameterError):
        ChannelSpec(10.0, power=0.0)
    with pytest.raises(ParameterError):
        ChannelSpec(float("nan"))


def test_awgn_statistics_and_gradient():
    spec = ChannelSpec(3.0, seed=4)
    s = torch.zeros(400000, dtype=torch.complex128, requires_grad=True)
    r = awgn_transmit(s, spec)
    n = r.detach()
    var = spec.noise_variance()
    assert float(n.real.var()) == pytest.approx(var / 2, rel=0.01)
    assert float(n.imag.var()) == pytest.approx(var / 2, rel=0.01)
    assert abs(float((n.real * n.imag).mean())) < 0.01 * var
    r.real.sum().backward()
    assert torch.allclose(s.grad.real, torch.ones(400000, dtype=torch.float64))


def test_user_streams_are_independent_and_reproducible():
    spec = ChannelSpec(0.0, seed=7)
    s = torch.zeros(1000, dtype=torch.complex128)
    a1, a2 = awgn_transmit(s, spec, user=1), awgn_transmit(s, spec, user=2)
    assert torch.equal(a1, awgn_transmit(s, spec, user=1))
    assert not torch.equal(a1, a2)
    assert ChannelSpec(0.0, seed=1).stream_seed(1) not in (ChannelSpec(0.0, seed=0).stream_seed(1),
                                                           ChannelSpec(0.0, seed=0).stream_seed(2))


def test_user2_snr_override():
    spec = ChannelSpec(10.0, snr_db_user2=0.0)
    assert spec.noise_variance(1) == pytest.approx(0.1)
    assert spec.noise_variance(2) == pytest.approx(1.0)


# -- alignment ----------------------------------------------------------------------

def test_identity_warp_is_exact():
    x = torch.randn(2, 3, 5, 7, dtype=torch.float64)
    assert torch.equal(warp(x, torch.eye(3, dtype=torch.float64)), x)


@pytest.mark.parametrize("dx,dy", [(1.0, 0.0), (-2.0, 1.0), (0.3, -0.6), (2.5, 1.25)])
def test_translation_matches_scipy_map_coordinates(dx, dy):
    rng = np.random.default_rng(0)
    img = rng.normal(size=(6, 9))
    out = warp(torch.tensor(img)[None, None], translation(dx, dy))[0, 0].numpy()
    hh, ww = np.meshgrid(np.arange(6), np.arange(9), indexing="ij")
    ref = ndimage.map_coordinates(img, [hh + dy, ww + dx], order=1, mode="constant", cval=0.0)
    inside = (hh + dy >= 0) & (hh + dy <= 5) & (ww + dx >= 0) & (ww + dx <= 8)
    assert np.allclose(out[inside], ref[inside], atol=1e-12)


def test_outside_reads_zero():
    x = torch.ones(1, 1, 4, 4, dtype=torch.float64)
    out = warp(x, translation(10.0, 0.0))
    assert torch.all(out == 0)


def test_bilinear_sampler_general_points_match_scipy():
    rng = np.random.default_rng(1)
    img = rng.normal(size=(7, 8))
    pts = np.stack([rng.uniform(0, 7, 50), rng.uniform(0, 6, 50)], -1)
    out = bilinear_sample(torch.tensor(img)[None, None], torch.tensor(pts)[None, None])[0, 0, 0].numpy()
    ref = ndimage.map_coordinates(img, [pts[:, 1], pts[:, 0]], order=1)
    assert np.allclose(out, ref, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_translation_composition(a, b, c, d):
    u = np.array([[1.5, 2.0, 1.0], [0.0, -1.0, 1.0]])
    once = project(u, (translation(a, b) @ translation(c, d)).numpy())
    twice = project(np.c_[project(u, translation(c, d).numpy()), np.ones(2)], translation(a, b).numpy())
    assert np.allclose(once, twice)
    assert np.allclose(once, u[:, :2] + [a + c, b + d])


def test_degenerate_projection_reports_index():
    M = np.array([[1.0, 0, 0], [0, 1.0, 0], [1.0, 0, 0]])
    u = np.array([[2.0, 0.0, 1.0], [0.0, 3.0, 1.0], [1.0, 1.0, 1.0]])
    with pytest.raises(DegenerateProjectionError) as info:
        project(u, M)
    assert info.value.index == (1,)


def test_sampling_grid_shape():
    M = torch.eye(3, dtype=torch.float64)[None].repeat(2, 1, 1)
    g = sampling_grid(M, 3, 4)
    assert g.shape == (2, 3, 4, 2)
    assert torch.equal(g[0, 2, 3], torch.tensor([3.0, 2.0], dtype=torch.float64))


def test_localization_starts_at_identity_and_stays_bounded():
    torch.manual_seed(0)
    net = LocalizationNet(4, width=8, hidden=8)
    x = torch.randn(2, 4, 6, 10)
    assert torch.allclose(net(x, x), torch.eye(3).expand(2, 3, 3))
    with torch.no_grad():
        net.fc2.bias[6:] = 100.0
    M = net(x, x)
    h, w = 6, 10
    corners = torch.tensor([[0, 0, 1], [w - 1, 0, 1], [0, h - 1, 1], [w - 1, h - 1, 1]], dtype=M.dtype)
    d = (M[0] @ corners.T)[2]
    assert torch.all(d >= 0.5) and torch.all(d <= 1.5)
    with pytest.raises(ShapeError):
        net(x, x[:, :, :4])


def test_transformation_module_outputs():
    torch.manual_seed(0)
    mod = TransformationModule(4, width=8, hidden=8)
    main, side = torch.randn(2, 4, 6, 10), torch.randn(2, 4, 6, 10)
    si, M = mod(main, side)
    assert si.shape == side.shape and M.shape == (2, 3, 3)
    assert torch.allclose(si, side)


# -- JSCC ---------------------------------------------------------------------------

def test_bandwidth_set_validation():
    assert BandwidthSet().values == DEFAULT_BANDWIDTHS
    for bad in ((), (3, 8), (8, 8), (16, 8), (-2,)):
        with pytest.raises(ConfigurationError):
            BandwidthSet(bad)
    with pytest.raises(ParameterError):
        BandwidthSet((8, 16)).index(12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 500, allow_nan=False), st.floats(0.05, 4))
def test_select_bandwidth_matches_brute_force(bits, eta):
    V = BandwidthSet()
    target = eta * bits
    best = min(V.values, key=lambda v: (abs(target - v), v))
    assert select_bandwidth(bits, eta, V) == best


def test_select_bandwidth_ties_and_errors():
    V = BandwidthSet((8, 16))
    assert select_bandwidth(12, 1.0, V) == 8
    assert select_bandwidth(1000, 1.0, V) == 16
    assert select_bandwidth(0, 1.0, V) == 8
    with pytest.raises(ParameterError):
        select_bandwidth(5, 0.0, V)


def test_plan_channel_uses():
    plan = make_plan(np.full(128, 40.0), np.full(128, 10.0), 1.0, BandwidthSet())
    assert plan.k_self == (40,) * 128 and plan.k_peer_est == (8,) * 128
    assert plan.n == 2560
    with pytest.raises(ShapeError):
        RatePlan((8, 8), (8,))
    with pytest.raises(ParameterError):
        RatePlan((7,), (8,))
    with pytest.raises(ParameterError):
        RatePlan((10,), (8,)).validate(BandwidthSet((8, 16)))


def test_power_normalize_exact():
    s = torch.randn(37, dtype=torch.complex128) * 5
    for p in (1.0, 0.25):
        assert float((power_normalize(s, p).abs() ** 2).mean()) == pytest.approx(p, rel=1e-12)


def test_channel_vector_framing():
    with pytest.raises(FramingError):
        ChannelVector(torch.zeros(5, dtype=torch.complex64), (2, 2))
    v = ChannelVector(torch.arange(6.0).to(torch.complex64), (2, 4))
    assert [len(s) for s in v.segments()] == [2, 4]


def test_transmission_rate():
    assert transmission_rate(3000, 200.0, 2.0, 64, 128) == pytest.approx((3000 + 50) / (3 * 64 * 128))
    with pytest.raises(ParameterError):
        transmission_rate(10, 1.0, 0.0, 8, 8)


def _plans(rng, n, l, V):
    return [RatePlan(tuple(rng.choice(V.values, l)), tuple(rng.choice(V.values, l))) for _ in range(n)]


def test_encoder_output_lengths_and_power():
    torch.manual_seed(0)
    V = BandwidthSet((8, 16, 24))
    enc = JSCCEncoder(6, V, width=16, heads=2)
    plans = _plans(np.random.default_rng(0), 3, 5, V)
    vecs = enc(torch.randn(3, 5, 6), plans)
    for v, p in zip(vecs, plans):
        assert v.n == p.n and v.lengths == p.symbol_lengths
        assert v.mean_power() == pytest.approx(1.0, rel=1e-5)
    with pytest.raises(ShapeError):
        enc(torch.randn(2, 5, 6), plans)


def test_decoder_rejects_mismatched_plan():
    torch.manual_seed(0)
    V = BandwidthSet((8, 16))
    enc, dec = JSCCEncoder(4, V, width=8, heads=2), JSCCDecoder(4, V, width=8, heads=2)
    plans = [RatePlan((8, 16), (8, 8))]
    vecs = enc(torch.randn(1, 2, 4), plans)
    assert dec(vecs, plans).shape == (1, 2, 4)
    with pytest.raises(FramingError):
        dec(vecs, [RatePlan((16, 8), (8, 8))])


def test_noiseless_fit_reduces_error():
    torch.manual_seed(0)
    V = BandwidthSet((8, 16))
    enc, dec = JSCCEncoder(4, V, width=16, heads=2), JSCCDecoder(4, V, width=16, heads=2)
    opt = torch.optim.Adam([*enc.parameters(), *dec.parameters()], lr=3e-3)
    y = torch.randn(8, 3, 4)
    plans = [RatePlan((16, 16, 16), (8, 8, 8))] * 8
    losses = []
    for _ in range(100):
        loss = ((dec(enc(y, plans), plans) - y) ** 2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    assert losses[-1] < 0.5 * losses[0]
