"""Image quality and rate metrics."""

import math

import numpy as np
import torch
import torch.nn.functional as F

from ..exceptions import ParameterError, ShapeError

PSNR_CAP = 100.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_K1, _K2 = 0.01, 0.03
_FLOOR = 1e-8


def _pair(x, x_hat):
    x = torch.as_tensor(x)
    x_hat = torch.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    dtype = torch.promote_types(x.dtype, x_hat.dtype)
    if not dtype.is_floating_point:
        dtype = torch.float64
    return x.to(dtype), x_hat.to(dtype)


def mse(x, x_hat):
    x, x_hat = _pair(x, x_hat)
    return ((x - x_hat) ** 2).mean()


def psnr(x, x_hat):
    """PSNR in dB for [0,1] images; exact reconstructions report the 100 dB cap."""
    err = float(mse(x, x_hat))
    if err <= 10 ** (-PSNR_CAP / 10):
        return PSNR_CAP
    return 10.0 * math.log10(1.0 / err)


def bitrate_bpp(total_bits, H, W):
    if H <= 0 or W <= 0:
        raise ParameterError("image dimensions must be positive")
    return total_bits / (H * W)


def _gauss_window(size, sigma, dtype, device):
    r = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2
    g = torch.exp(-(r ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _ssim_cs(x, y, size, sigma=1.5):
    c = x.shape[1]
    g = _gauss_window(size, sigma, x.dtype, x.device)
    wh = g.view(1, 1, 1, -1).repeat(c, 1, 1, 1)
    wv = g.view(1, 1, -1, 1).repeat(c, 1, 1, 1)

    def blur(t):
        return F.conv2d(F.conv2d(t, wh, groups=c), wv, groups=c)

    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx ** 2
    syy = blur(y * y) - my ** 2
    sxy = blur(x * y) - mx * my
    c1, c2 = _K1 ** 2, _K2 ** 2
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mx * my + c1) / (mx ** 2 + my ** 2 + c1)
    return (lum * cs).flatten(1).mean(1), cs.flatten(1).mean(1)


def ms_ssim(x, x_hat, weights=MS_SSIM_WEIGHTS, window=11):
    """Per-image MS-SSIM of (N, 3, H, W) tensors in [0,1]; differentiable.

    The Gaussian window shrinks to the image size at coarse scales so that
    small images still get all five scales.
    """
    x, x_hat = _pair(x, x_hat)
    if x.ndim != 4:
        raise ShapeError(f"expected (N, C, H, W), got {tuple(x.shape)}")
    w = torch.as_tensor(weights, dtype=x.dtype, device=x.device)
    css = []
    for j in range(len(weights)):
        size = min(window, x.shape[-2], x.shape[-1])
        size -= (size + 1) % 2
        ssim, cs = _ssim_cs(x, x_hat, size)
        if j < len(weights) - 1:
            css.append(cs.clamp(min=_FLOOR))
            if min(x.shape[-2:]) >= 2:
                x, x_hat = F.avg_pool2d(x, 2), F.avg_pool2d(x_hat, 2)
    vals = torch.stack(css + [ssim.clamp(min=_FLOOR)], 0)
    return torch.prod(vals ** w[:, None], 0)


def summarize(values):
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()) if arr.size else float("nan")
