import numpy as np
import torch

from .._rounding import round_half_away
from ..exceptions import InputError


def quantize(y):
    """Round to the nearest integer, ties away from zero.

    Tensors stay tensors (float dtype, no gradient); anything else comes back
    as an int64 numpy array.
    """
    if torch.is_tensor(y):
        if torch.isnan(y).any():
            raise InputError("cannot quantize NaN values")
        return round_half_away(y.detach())
    arr = np.asarray(y, dtype=np.float64)
    if np.isnan(arr).any():
        raise InputError("cannot quantize NaN values")
    return (np.sign(arr) * np.floor(np.abs(arr) + 0.5)).astype(np.int64)


def uniform_noise(shape, generator=None, dtype=torch.float32, device=None):
    """i.i.d. samples from the open interval (-1/2, 1/2)."""
    u = torch.rand(shape, generator=generator, dtype=dtype, device=device)
    # torch.rand is on [0, 1); exclude the closed endpoint -1/2
    return torch.where(u == 0, torch.full_like(u, 0.5), u) - 0.5


def relax(y, generator=None):
    """Additive-uniform-noise stand-in for rounding used during training."""
    if not torch.is_tensor(y):
        y = torch.as_tensor(np.asarray(y, dtype=np.float64))
    return y + uniform_noise(y.shape, generator=generator, dtype=y.dtype, device=y.device)
