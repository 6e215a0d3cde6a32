"""Complex AWGN channel and Shannon capacity."""

import math
from dataclasses import dataclass

import torch

from .exceptions import ParameterError


@dataclass(frozen=True)
class ChannelSpec:
    """SNR in dB (``math.inf`` for a noiseless link), transmit power and seed.

    ``snr_db_user2`` optionally overrides the SNR of the second user; by
    default both links share the same noise variance.
    """

    snr_db: float = 10.0
    power: float = 1.0
    seed: int = 0
    snr_db_user2: float = None

    def __post_init__(self):
        if not self.power > 0:
            raise ParameterError(f"power must be positive, got {self.power}")
        if math.isnan(self.snr_db):
            raise ParameterError("snr_db must not be NaN")

    def snr_for(self, user):
        if user == 2 and self.snr_db_user2 is not None:
            return self.snr_db_user2
        return self.snr_db

    def noise_variance(self, user=1):
        """Complex noise variance E|n|^2 = P * 10^(-snr/10)."""
        snr = self.snr_for(user)
        if math.isinf(snr) and snr > 0:
            return 0.0
        return self.power * 10.0 ** (-snr / 10.0)

    def stream_seed(self, user):
        return int(self.seed) * 2 + (user - 1) + 0x5EED

    def generator(self, user):
        """Independent, reproducible noise stream for each user."""
        g = torch.Generator()
        g.manual_seed(self.stream_seed(user))
        return g


def awgn_transmit(s, spec, generator=None, user=1):
    """Add circularly symmetric complex Gaussian noise to a complex tensor.

    Real and imaginary parts each get variance eps^2 / 2, so E|n|^2 = eps^2.
    Gradients pass through unchanged.
    """
    var = spec.noise_variance(user)
    if var == 0.0:
        return s
    if generator is None:
        generator = spec.generator(user)
    real_dtype = s.real.dtype
    std = math.sqrt(var / 2.0)
    noise = torch.complex(
        torch.randn(s.shape, generator=generator, dtype=real_dtype),
        torch.randn(s.shape, generator=generator, dtype=real_dtype),
    ) * std
    return s + noise


def capacity(snr_db):
    """AWGN Shannon capacity log2(1 + SNR) in bits per complex channel use."""
    snr_db = float(snr_db)
    if not math.isfinite(snr_db):
        raise ParameterError("capacity needs a finite SNR")
    return math.log2(1.0 + 10.0 ** (snr_db / 10.0))
