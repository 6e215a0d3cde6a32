"""Conditional Gaussian entropy model for the main latent."""

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch.special import log_ndtr

from .._rounding import round_half_away
from ..exceptions import ParameterError

SIGMA_MIN = 1e-6
WIDE_SIGMA = 100.0
LN2 = math.log(2.0)


def _tensor(x, dtype=torch.float64):
    if torch.is_tensor(x):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=dtype)


def _finish(result, *inputs):
    if any(torch.is_tensor(x) for x in inputs):
        return result
    out = result.detach().cpu().numpy()
    return float(out) if out.ndim == 0 else out


def log_bin_mass(value, mu, sigma):
    """Natural log of the mass of N(mu, sigma) on [value - 1/2, value + 1/2].

    Works on the lower tail (|value - mu| reflected) with log_ndtr so the
    result stays finite far out in the tails.
    """
    v = torch.abs(value - mu)
    upper = (0.5 - v) / sigma
    lower = (-0.5 - v) / sigma
    lu = log_ndtr(upper)
    ll = log_ndtr(lower)
    return lu + torch.log1p(-torch.exp(ll - lu))


def latent_bin_pmf(t, mu, sigma):
    """Probability that a N(mu, sigma) variable rounds to the integer ``t``.

    Accepts scalars, numpy arrays or tensors (tensors keep their graph).
    """
    t_, mu_, sigma_ = (_tensor(x) for x in (t, mu, sigma))
    if torch.any(sigma_ < SIGMA_MIN):
        raise ParameterError(f"sigma must be >= {SIGMA_MIN}")
    p = torch.exp(log_bin_mass(t_, mu_, sigma_))
    return _finish(p, t, mu, sigma)


def element_bits(y, mu, sigma):
    """-log2 of the uniform-convolved Gaussian density at ``y``, per element.

    At integer ``y`` this is exactly -log2 of :func:`latent_bin_pmf`.
    """
    return -log_bin_mass(y, mu, sigma) / LN2


@dataclass
class RateReport:
    """Rate bookkeeping for one user's latent plus the shared hyperprior cost."""

    token_bits: torch.Tensor
    latent_bits: float
    hyper_joint_bits: float = 0.0

    @property
    def total_bits(self):
        return total_code_rate(self.latent_bits, self.hyper_joint_bits)


def latent_rate_bits(y, mu, sigma, *, quantized=False):
    """Per-token bit sums for a latent of shape (N, C, h, w).

    Returns a tensor of shape (N, h*w) whose tokens follow the row-major
    token view; channels are summed. With ``quantized=True`` the latent is
    rounded first (inference); otherwise it is evaluated as given (the noisy
    relaxation during training).
    """
    y = round_half_away(y) if quantized else y
    bits = element_bits(y, mu, sigma)
    n, c, h, w = bits.shape
    return bits.sum(1).reshape(n, h * w)


def discretized_entropy_bits(mu, sigma, *, support=64):
    """Entropy in bits of round(Y) for Y ~ N(mu, sigma), elementwise.

    Summed exactly over ``round(mu) +- max(support, 10 sigma)``; for sigma
    above WIDE_SIGMA the differential entropy plus its leading quantization
    correction log2(e) / (24 sigma^2) is used (error of order sigma^-4).
    """
    mu = _tensor(mu)
    sigma = _tensor(sigma, dtype=mu.dtype)
    mu, sigma = torch.broadcast_tensors(mu, sigma)
    flat_mu, flat_sigma = mu.reshape(-1), sigma.reshape(-1)
    wide = flat_sigma > WIDE_SIGMA
    narrow_max = float(flat_sigma[~wide].max()) if bool((~wide).any()) else 0.0
    support = max(support, math.ceil(10 * narrow_max))
    offsets = torch.arange(-support, support + 1, dtype=mu.dtype, device=mu.device)
    flat_c = round_half_away(flat_mu)
    out = torch.empty_like(flat_mu)
    chunk = max(1, 2 ** 20 // offsets.numel())
    for s in range(0, flat_mu.numel(), chunk):
        m, sg, c = flat_mu[s:s + chunk, None], flat_sigma[s:s + chunk, None], flat_c[s:s + chunk, None]
        logp = log_bin_mass(c + offsets, m, sg)
        out[s:s + chunk] = -(torch.exp(logp) * logp).sum(-1) / LN2
    if torch.any(wide):
        sw = flat_sigma[wide]
        out[wide] = 0.5 * torch.log2(2 * math.pi * math.e * sw ** 2) + 1.0 / (24.0 * LN2 * sw ** 2)
    return out.reshape(mu.shape)


def expected_token_bits(mu, sigma):
    """Expected per-token code length (N, h*w) under (mu, sigma) of shape (N, C, h, w)."""
    ent = discretized_entropy_bits(mu, sigma)
    n, c, h, w = ent.shape
    return ent.sum(1).reshape(n, h * w)


def total_code_rate(latent_bits, hyper_joint_bits):
    """Per-user rate: own latent bits plus half the joint hyperprior bits."""
    for name, v in (("latent_bits", latent_bits), ("hyper_joint_bits", hyper_joint_bits)):
        value = float(v)
        if not math.isfinite(value) or value < 0:
            raise ParameterError(f"{name} must be a nonnegative number, got {v!r}")
    return float(latent_bits) + float(hyper_joint_bits) / 2.0
