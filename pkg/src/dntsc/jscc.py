"""Token-wise variable-rate JSCC encoder/decoder with learnable rate tokens."""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .exceptions import ConfigurationError, FramingError, ParameterError, ShapeError

RATE_TOKEN_LEN = 4
DEFAULT_BANDWIDTHS = tuple(8 * a for a in range(1, 21))


@dataclass(frozen=True)
class BandwidthSet:
    """Allowed per-token bandwidths, counted in real dimensions."""

    values: tuple = DEFAULT_BANDWIDTHS

    def __post_init__(self):
        v = tuple(int(x) for x in self.values)
        if not v:
            raise ConfigurationError("bandwidth set is empty")
        if any(x <= 0 or x % 2 for x in v):
            raise ConfigurationError(f"bandwidths must be positive even integers, got {v}")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ConfigurationError("bandwidths must be strictly increasing")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def index(self, k):
        """Positions of bandwidth values ``k`` within the set."""
        lookup = {v: i for i, v in enumerate(self.values)}
        arr = np.asarray(k)
        try:
            return np.vectorize(lookup.__getitem__, otypes=[np.int64])(arr)
        except KeyError as exc:
            raise ParameterError(f"bandwidth {exc.args[0]} is not in the set") from None


def select_bandwidth(token_bits, eta, V):
    """Member of ``V`` closest to eta * token_bits; ties go to the smaller member.

    Values outside the set's range clamp to its ends (a consequence of the
    nearest-member rule). Accepts scalars or arrays.
    """
    values = V.values if isinstance(V, BandwidthSet) else tuple(V)
    if not values:
        raise ConfigurationError("bandwidth set is empty")
    if eta <= 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    grid = np.asarray(sorted(values), dtype=np.float64)
    target = eta * np.asarray(token_bits, dtype=np.float64)
    dist = np.abs(target[..., None] - grid)
    k = grid[np.argmin(dist, axis=-1)].astype(np.int64)
    return int(k) if k.ndim == 0 else k


@dataclass(frozen=True)
class RatePlan:
    """Per-token bandwidths for one image: own allocation and the peer-rate context."""

    k_self: tuple
    k_peer_est: tuple

    def __post_init__(self):
        object.__setattr__(self, "k_self", tuple(int(k) for k in self.k_self))
        object.__setattr__(self, "k_peer_est", tuple(int(k) for k in self.k_peer_est))
        if len(self.k_self) != len(self.k_peer_est):
            raise ShapeError("k_self and k_peer_est must have the same length")
        if any(k % 2 for k in self.k_self):
            raise ParameterError("bandwidths must be even")

    @property
    def n(self):
        """Complex channel uses."""
        return sum(self.k_self) // 2

    @property
    def symbol_lengths(self):
        return tuple(k // 2 for k in self.k_self)

    def validate(self, V):
        allowed = set(V.values)
        bad = [k for k in self.k_self + self.k_peer_est if k not in allowed]
        if bad:
            raise ParameterError(f"bandwidths {sorted(set(bad))} are not in the set")
        return self


def make_plan(self_bits, peer_bits, eta, V):
    """RatePlan from per-token (expected) bits of the own latent and of the peer's."""
    return RatePlan(tuple(np.atleast_1d(select_bandwidth(self_bits, eta, V)).tolist()),
                    tuple(np.atleast_1d(select_bandwidth(peer_bits, eta, V)).tolist()))


@dataclass
class ChannelVector:
    """Complex channel symbols of one image, grouped per token."""

    symbols: torch.Tensor
    lengths: tuple
    power: float = 1.0

    def __post_init__(self):
        if self.symbols.ndim != 1 or self.symbols.shape[0] != sum(self.lengths):
            raise FramingError(f"{self.symbols.shape[0]} symbols do not match segment lengths summing to {sum(self.lengths)}")

    @property
    def n(self):
        return self.symbols.shape[0]

    def segments(self):
        return torch.split(self.symbols, list(self.lengths))

    def mean_power(self):
        return float((self.symbols.detach().abs() ** 2).mean())


def power_normalize(s, power=1.0):
    """Scale complex symbols so that mean |s|^2 equals ``power`` exactly."""
    n = s.shape[-1]
    energy = (s.real ** 2 + s.imag ** 2).sum(-1, keepdim=True)
    return s * torch.sqrt(n * power / energy)


def transmission_rate(n, hyper_joint_bits, capacity_bits, H, W, C=3):
    """Channel uses per source dimension including the capacity-coded hyperprior share."""
    if capacity_bits <= 0:
        raise ParameterError(f"capacity must be positive, got {capacity_bits}")
    if min(H, W, C) <= 0:
        raise ParameterError("image dimensions must be positive")
    return (n + hyper_joint_bits / (2.0 * capacity_bits)) / (C * H * W)


class TokenBlock(nn.Module):
    """Pre-norm transformer block with global attention across the latent tokens."""

    def __init__(self, dim, heads, mlp_ratio=4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x):
        y = self.norm1(x)
        x = x + self.attn(y, y, y, need_weights=False)[0]
        return x + self.mlp(self.norm2(x))


class _RateContext(nn.Module):
    def __init__(self, n_rates):
        super().__init__()
        self.self_tokens = nn.Embedding(n_rates, RATE_TOKEN_LEN)
        self.peer_tokens = nn.Embedding(n_rates, RATE_TOKEN_LEN)
        nn.init.normal_(self.self_tokens.weight, std=0.5)
        nn.init.normal_(self.peer_tokens.weight, std=0.5)

    def forward(self, x, self_idx, peer_idx):
        return torch.cat([x, self.self_tokens(self_idx), self.peer_tokens(peer_idx)], -1)


def _plan_indices(plans, V, device):
    self_idx = torch.as_tensor(np.stack([V.index(p.k_self) for p in plans]), device=device)
    peer_idx = torch.as_tensor(np.stack([V.index(p.k_peer_est) for p in plans]), device=device)
    return self_idx, peer_idx


class JSCCEncoder(nn.Module):
    """Latent tokens (N, l, C4) -> power-normalized complex vectors, one per image."""

    def __init__(self, latent_channels, V=BandwidthSet(), width=64, heads=4, power=1.0):
        super().__init__()
        self.V = V if isinstance(V, BandwidthSet) else BandwidthSet(tuple(V))
        self.power = power
        self.context = _RateContext(len(self.V))
        self.inp = nn.Linear(latent_channels + 2 * RATE_TOKEN_LEN, width)
        self.block = TokenBlock(width, heads)
        self.heads = nn.ModuleList(nn.Linear(width, v) for v in self.V.values)

    def forward(self, y_tokens, plans):
        n, l, _ = y_tokens.shape
        if len(plans) != n or any(len(p.k_self) != l for p in plans):
            raise ShapeError(f"need one plan of {l} tokens per image")
        self_idx, peer_idx = _plan_indices(plans, self.V, y_tokens.device)
        h = self.block(self.inp(self.context(y_tokens, self_idx, peer_idx)))
        vmax = self.V.values[-1]
        out = h.new_zeros(n, l, vmax)
        for i, (v, head) in enumerate(zip(self.V.values, self.heads)):
            sel = self_idx == i
            if sel.any():
                out[sel, :v] = head(h[sel])
        vectors = []
        for b, plan in enumerate(plans):
            k = torch.as_tensor(plan.k_self, device=out.device)
            valid = torch.arange(vmax, device=out.device)[None, :] < k[:, None]
            reals = out[b][valid]
            s = torch.complex(reals[0::2], reals[1::2])
            vectors.append(ChannelVector(power_normalize(s, self.power), plan.symbol_lengths, self.power))
        return vectors


class JSCCDecoder(nn.Module):
    """Received vectors -> latent tokens (N, l, C4)."""

    def __init__(self, latent_channels, V=BandwidthSet(), width=64, heads=4):
        super().__init__()
        self.V = V if isinstance(V, BandwidthSet) else BandwidthSet(tuple(V))
        self.inputs = nn.ModuleList(nn.Linear(v, width) for v in self.V.values)
        self.context = _RateContext(len(self.V))
        self.mix = nn.Linear(width + 2 * RATE_TOKEN_LEN, width)
        self.block = TokenBlock(width, heads)
        self.out = nn.Linear(width, latent_channels)
        self.width = width

    def forward(self, received, plans):
        if len(received) != len(plans):
            raise ShapeError("need one plan per received vector")
        vmax = self.V.values[-1]
        rows = []
        for vec, plan in zip(received, plans):
            if tuple(vec.lengths) != plan.symbol_lengths or vec.n != plan.n:
                raise FramingError("received segment lengths disagree with the rate plan")
            reals = torch.view_as_real(vec.symbols).reshape(-1)
            k = torch.as_tensor(plan.k_self, device=reals.device)
            valid = torch.arange(vmax, device=reals.device)[None, :] < k[:, None]
            padded = reals.new_zeros(len(plan.k_self), vmax)
            padded[valid] = reals
            rows.append(padded)
        padded = torch.stack(rows)
        self_idx, peer_idx = _plan_indices(plans, self.V, padded.device)
        n, l, _ = padded.shape
        h = padded.new_zeros(n, l, self.width)
        for i, (v, fc) in enumerate(zip(self.V.values, self.inputs)):
            sel = self_idx == i
            if sel.any():
                h[sel] = fc(padded[sel][:, :v])
        h = self.block(self.mix(self.context(h, self_idx, peer_idx)))
        return self.out(h)

