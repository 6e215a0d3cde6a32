"""End-to-end two-user systems: separate (bitstream) and joint source-channel coding.

Both systems share the per-user analysis and hyper transforms, the single
joint synthesis transform, the two alignment modules and the joint
hyperprior model. The JSCC system adds a per-user encoder/decoder pair and
runs the latents through simulated AWGN links.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from . import checkpoint
from ._rounding import round_half_away
from .alignment import TransformationModule
from .channel import ChannelSpec, awgn_transmit, capacity
from .entropy_models import JointHyperModel, element_bits, expected_token_bits
from .exceptions import CheckpointError, ConfigurationError, DecodeError, ShapeError
from .jscc import DEFAULT_BANDWIDTHS, BandwidthSet, JSCCDecoder, JSCCEncoder, make_plan, transmission_rate
from .quant_coding import Bitstream, decode_hyper, decode_latent, encode_hyper, encode_latent, hyper_tables
from .quant_coding.quantize import uniform_noise
from .transforms import (
    AnalysisTransform,
    HyperAnalysis,
    HyperSynthesis,
    SynthesisTransform,
    TransformConfig,
    latent_grid,
    latent_tokens,
)


@dataclass(frozen=True)
class SystemOptions:
    """Switches shared by both pipelines.

    ``joint_hyper=False`` constrains the hyperprior model to independence;
    ``side_info=False`` feeds zeros instead of the aligned side latent.
    ``tied_init`` starts user 2's modules from a copy of user 1's.
    """

    kind: str = "ntsc"
    K: int = 1
    joint_hyper: bool = True
    side_info: bool = True
    bandwidths: tuple = DEFAULT_BANDWIDTHS
    eta: float = 1.0
    jscc_width: int = 64
    jscc_heads: int = 4
    power: float = 1.0
    tied_init: bool = True
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in ("ntsc", "ntscc"):
            raise ConfigurationError(f"unknown pipeline {self.kind!r}")
        if self.K < 1:
            raise ConfigurationError("K must be >= 1")
        if self.eta <= 0:
            raise ConfigurationError("eta must be positive")
        object.__setattr__(self, "bandwidths", tuple(int(v) for v in self.bandwidths))

    def to_dict(self):
        d = asdict(self)
        d.pop("extra")
        d["bandwidths"] = list(self.bandwidths)
        return d


def _seeded(seed, build):
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return build()


class DistributedCodec(nn.Module):
    """Parts shared by the two pipelines."""

    def __init__(self, cfg=None, options=None):
        super().__init__()
        self.cfg = cfg or TransformConfig.desk()
        self.options = options or SystemOptions()
        _seeded(self.cfg.seed, self._build)
        if self.options.tied_init:
            for a, b in self._user_pairs():
                b.load_state_dict(a.state_dict())

    def _user_pairs(self):
        return [(self.ga1, self.ga2), (self.ha1, self.ha2), (self.hs1, self.hs2), (self.align1, self.align2)]

    def _build(self):
        cfg, opt = self.cfg, self.options
        c4 = cfg.latent_channels
        self.ga1, self.ga2 = AnalysisTransform(cfg), AnalysisTransform(cfg)
        self.ha1, self.ha2 = HyperAnalysis(cfg), HyperAnalysis(cfg)
        self.hs1, self.hs2 = HyperSynthesis(cfg), HyperSynthesis(cfg)
        self.gs = SynthesisTransform(cfg)
        self.align1 = TransformationModule(c4, cfg.loc_width, cfg.loc_width)
        self.align2 = TransformationModule(c4, cfg.loc_width, cfg.loc_width)
        self.hyper_prior = JointHyperModel(cfg.hyper_channels, opt.K, independent=not opt.joint_hyper)

    # -- building blocks -------------------------------------------------
    def analysis(self, x, user):
        return (self.ga1 if user == 1 else self.ga2)(x)

    def hyper_analysis(self, y, user):
        return (self.ha1 if user == 1 else self.ha2)(y)

    def hyper_synthesis(self, z, user, latent_hw):
        return (self.hs1 if user == 1 else self.hs2)(z, latent_hw)

    def side_information(self, main, side, user):
        """Aligned side latent for ``user``'s reconstruction (zeros when disabled)."""
        if not self.options.side_info:
            return torch.zeros_like(side), None
        module = self.align1 if user == 1 else self.align2
        return module(main, side)

    def reconstruct(self, y1, y2):
        si21, m1 = self.side_information(y1, y2, 1)
        si12, m2 = self.side_information(y2, y1, 2)
        return self.gs(y1, si21), self.gs(y2, si12), (m1, m2)

    def hyper_bits(self, z1, z2):
        """Per-image joint hyperprior bits, shape (N,)."""
        return self.hyper_prior.bits(z1, z2).flatten(1).sum(1)

    # -- persistence -----------------------------------------------------
    def config_dict(self):
        return {"transform": self.cfg.to_dict(), "system": self.options.to_dict()}

    def save(self, path, meta=None, extra_tensors=None):
        tensors = dict(self.state_dict())
        tensors.update(extra_tensors or {})
        checkpoint.save(path, tensors, self.config_dict(), meta)

    @staticmethod
    def load(path, with_extras=False):
        tensors, config, meta = checkpoint.load(path)
        model = build_system(config)
        own = model.state_dict()
        missing = [k for k in own if k not in tensors]
        if missing:
            raise CheckpointError(f"checkpoint lacks {len(missing)} parameters, e.g. {missing[0]}")
        dtype = next(iter(tensors.values())).dtype if tensors else torch.float32
        if dtype == torch.float64:
            model = model.double()
        model.load_state_dict({k: tensors[k] for k in own})
        if with_extras:
            extras = {k: v for k, v in tensors.items() if k not in own}
            return model, meta, extras
        return model


class NTSCSystem(DistributedCodec):
    """Separate source/channel coding: quantized latents, real bitstreams."""

    def forward(self, x1, x2, generator=None):
        """Training pass with uniform-noise relaxation.

        Returns a dict with reconstructions and per-image bit counts
        ``bits_y1``, ``bits_y2`` (latents) and ``bits_z`` (joint hyperprior).
        """
        y1, y2 = self.analysis(x1, 1), self.analysis(x2, 2)
        z1, z2 = self.hyper_analysis(y1, 1), self.hyper_analysis(y2, 2)
        z1t, z2t = _noisy(z1, generator), _noisy(z2, generator)
        y1t, y2t = _noisy(y1, generator), _noisy(y2, generator)
        hw = y1.shape[-2:]
        mu1, s1 = self.hyper_synthesis(z1t, 1, hw)
        mu2, s2 = self.hyper_synthesis(z2t, 2, hw)
        x1h, x2h, ms = self.reconstruct(y1t, y2t)
        return {
            "x_hat1": x1h, "x_hat2": x2h,
            "bits_y1": element_bits(y1t, mu1, s1).flatten(1).sum(1),
            "bits_y2": element_bits(y2t, mu2, s2).flatten(1).sum(1),
            "bits_z": self.hyper_bits(z1t, z2t),
            "M1": ms[0], "M2": ms[1],
        }

    # -- inference -------------------------------------------------------
    def marginal_tables(self, user):
        p = self.hyper_prior.params(ndim=2)
        i = user - 1
        w = p.weights.reshape(-1, p.K).detach().double().numpy()
        m = p.means[..., i].reshape(-1, p.K).detach().double().numpy()
        s = p.scales[..., i].reshape(-1, p.K).detach().double().numpy()
        return hyper_tables(w, m, s)

    @torch.no_grad()
    def compress(self, x1, x2):
        """Encode one stereo pair (tensors of shape (1, 3, H, W)).

        Returns (bitstream1, bitstream2, accounting) where accounting holds
        the model-based rates next to the achieved bitstream sizes.
        """
        if x1.shape[0] != 1 or x1.shape != x2.shape:
            raise ShapeError(f"compress takes one pair of (1, 3, H, W) images, got {tuple(x1.shape)} and {tuple(x2.shape)}")
        H, W = x1.shape[-2:]
        ys = [self.analysis(x1, 1), self.analysis(x2, 2)]
        zbars = [round_half_away(self.hyper_analysis(y, u + 1)) for u, y in enumerate(ys)]
        hz = self.hyper_bits(zbars[0], zbars[1])[0].item()
        streams, acct = [], {"hyper_joint_bits": hz}
        for u in (1, 2):
            y, zbar = ys[u - 1], zbars[u - 1]
            hw = tuple(y.shape[-2:])
            mu, sigma = self.hyper_synthesis(zbar, u, hw)
            ybar = round_half_away(y)
            ry = element_bits(ybar, mu, sigma).sum().item()
            zseg = encode_hyper(zbar[0].numpy(), self.marginal_tables(u))
            yseg = encode_latent(ybar.numpy().astype(np.int64), mu.double().numpy(), sigma.double().numpy())
            bs = Bitstream(u, (H, W), (hw[0], hw[1], y.shape[1]),
                           (zbar.shape[2], zbar.shape[3], zbar.shape[1]), zseg, yseg)
            streams.append(bs)
            acct[f"latent_bits{u}"] = ry
            acct[f"total_bits{u}"] = ry + hz / 2.0
            acct[f"accounting_bpp{u}"] = (ry + hz / 2.0) / (H * W)
            acct[f"actual_bits{u}"] = 8 * len(bs)
            acct[f"actual_bpp{u}"] = 8 * len(bs) / (H * W)
            acct[f"z_segment_bits{u}"] = 8 * len(zseg)
            acct[f"y_segment_bits{u}"] = 8 * len(yseg)
        return streams[0], streams[1], acct

    @torch.no_grad()
    def decompress(self, stream1, stream2):
        """Decode both users' bitstreams and jointly reconstruct (1, 3, H, W) images."""
        ybars = []
        for u, bs in ((1, stream1), (2, stream2)):
            if isinstance(bs, (bytes, bytearray)):
                bs = Bitstream.frombytes(bs)
            if bs.user != u:
                raise DecodeError(f"bitstream for user {bs.user} given in the user-{u} slot")
            if bs.latent_shape[2] != self.cfg.latent_channels or bs.hyper_shape[2] != self.cfg.hyper_channels:
                raise DecodeError("bitstream channel counts do not match this model")
            zbar = decode_hyper(bs.z_segment, self.marginal_tables(u))
            zt = torch.as_tensor(zbar, dtype=self.dtype)[None]
            h, w, c = bs.latent_shape
            mu, sigma = self.hyper_synthesis(zt, u, (h, w))
            ybar = decode_latent(bs.y_segment, mu.double().numpy(), sigma.double().numpy())
            ybars.append(torch.as_tensor(ybar, dtype=self.dtype))
        x1h, x2h, _ = self.reconstruct(ybars[0], ybars[1])
        return x1h, x2h

    @property
    def dtype(self):
        return next(self.parameters()).dtype


class NTSCCSystem(DistributedCodec):
    """Joint source-channel coding over AWGN links with rate-adaptive token bandwidths."""

    def _build(self):
        super()._build()
        opt, c4 = self.options, self.cfg.latent_channels
        self.V = BandwidthSet(opt.bandwidths)
        self.fe1 = JSCCEncoder(c4, self.V, opt.jscc_width, opt.jscc_heads, opt.power)
        self.fe2 = JSCCEncoder(c4, self.V, opt.jscc_width, opt.jscc_heads, opt.power)
        self.fd1 = JSCCDecoder(c4, self.V, opt.jscc_width, opt.jscc_heads)
        self.fd2 = JSCCDecoder(c4, self.V, opt.jscc_width, opt.jscc_heads)

    def _user_pairs(self):
        return super()._user_pairs() + [(self.fe1, self.fe2), (self.fd1, self.fd2)]

    @torch.no_grad()
    def plans(self, zbar1, zbar2, hw):
        """Transmitter plans (peer context from the MMSE estimate) and receiver plans.

        Both sides derive ``k_self`` from the same quantized hyperprior, so the
        framing agrees; the receiver's peer context uses the actual peer
        hyperprior.
        """
        eta, V = self.options.eta, self.V
        zbars = (zbar1, zbar2)
        own = [expected_token_bits(*self.hyper_synthesis(zbars[u - 1], u, hw)).double().numpy() for u in (1, 2)]
        tx, rx = [], []
        for u in (1, 2):
            peer = 3 - u
            zstar = self.hyper_prior.peer_estimate(zbars[u - 1], own_user=u)
            est = expected_token_bits(*self.hyper_synthesis(zstar, peer, hw)).double().numpy()
            tx.append([make_plan(own[u - 1][b], est[b], eta, V) for b in range(len(est))])
            rx.append([make_plan(own[u - 1][b], own[peer - 1][b], eta, V) for b in range(len(est))])
        return tx, rx

    def transmit(self, y1, y2, zbar1, zbar2, spec, generators=(None, None)):
        """Encode, pass through the channels and decode; returns recovered latents and plans."""
        hw = tuple(y1.shape[-2:])
        tx, rx = self.plans(zbar1, zbar2, hw)
        out, sent = [], []
        for u, y, enc, dec in ((1, y1, self.fe1, self.fd1), (2, y2, self.fe2, self.fd2)):
            vectors = enc(latent_tokens(y), tx[u - 1])
            received = [type(v)(awgn_transmit(v.symbols, spec, generators[u - 1], user=u), v.lengths, v.power)
                        for v in vectors]
            tokens = dec(received, rx[u - 1])
            out.append(latent_grid(tokens, *hw))
            sent.append(vectors)
        return out[0], out[1], tx, rx, sent

    def forward(self, x1, x2, spec, generator=None):
        """Training pass; channel noise is drawn from ``generator`` for both users in turn."""
        y1, y2 = self.analysis(x1, 1), self.analysis(x2, 2)
        z1, z2 = self.hyper_analysis(y1, 1), self.hyper_analysis(y2, 2)
        z1t, z2t = _noisy(z1, generator), _noisy(z2, generator)
        y1t, y2t = _noisy(y1, generator), _noisy(y2, generator)
        hw = y1.shape[-2:]
        mu1, s1 = self.hyper_synthesis(z1t, 1, hw)
        mu2, s2 = self.hyper_synthesis(z2t, 2, hw)
        zb1, zb2 = round_half_away(z1.detach()), round_half_away(z2.detach())
        y1h, y2h, tx, rx, sent = self.transmit(y1, y2, zb1, zb2, spec, (generator, generator))
        x1h, x2h, ms = self.reconstruct(y1h, y2h)
        return {
            "x_hat1": x1h, "x_hat2": x2h,
            "bits_y1": element_bits(y1t, mu1, s1).flatten(1).sum(1),
            "bits_y2": element_bits(y2t, mu2, s2).flatten(1).sum(1),
            "bits_z": self.hyper_bits(z1t, z2t),
            "plans_tx": tx, "plans_rx": rx, "vectors": sent,
            "M1": ms[0], "M2": ms[1],
        }

    @torch.no_grad()
    def simulate(self, x1, x2, spec):
        """Inference over the channel for a batch; returns reconstructions and per-image rates."""
        H, W = x1.shape[-2:]
        y1, y2 = self.analysis(x1, 1), self.analysis(x2, 2)
        zb1 = round_half_away(self.hyper_analysis(y1, 1))
        zb2 = round_half_away(self.hyper_analysis(y2, 2))
        gens = (spec.generator(1), spec.generator(2))
        y1h, y2h, tx, rx, sent = self.transmit(y1, y2, zb1, zb2, spec, gens)
        x1h, x2h, _ = self.reconstruct(y1h, y2h)
        hz = self.hyper_bits(zb1, zb2)
        snr = spec.snr_db
        cap = capacity(snr) if math.isfinite(snr) else math.inf
        rates = []
        for b in range(x1.shape[0]):
            row = {"hyper_joint_bits": hz[b].item()}
            for u in (1, 2):
                n = tx[u - 1][b].n
                row[f"n{u}"] = n
                row[f"r{u}"] = (transmission_rate(n, hz[b].item(), cap, H, W) if math.isfinite(cap)
                                else n / (3 * H * W))
                row[f"power{u}"] = sent[u - 1][b].mean_power()
            rates.append(row)
        return x1h, x2h, rates, tx, rx


def _noisy(t, generator):
    return t + uniform_noise(t.shape, generator=generator, dtype=t.dtype, device=t.device)


def build_system(config):
    """System from a config dict as written into checkpoints."""
    cfg = TransformConfig.from_dict(config["transform"])
    sysd = dict(config.get("system", {}))
    if "bandwidths" in sysd:
        sysd["bandwidths"] = tuple(sysd["bandwidths"])
    options = SystemOptions(**sysd)
    cls = NTSCSystem if options.kind == "ntsc" else NTSCCSystem
    return cls(cfg, options)


__all__ = ["SystemOptions", "DistributedCodec", "NTSCSystem", "NTSCCSystem", "build_system", "ChannelSpec"]
