"""Projective alignment of the side latent: localization, grid generation, bilinear sampling.

Coordinates are latent-grid pixel coordinates: column index ``w`` first,
row index ``h`` second, homogeneous third. Samples that fall outside the
grid read zeros.
"""

import numpy as np
import torch
from torch import nn

from .exceptions import DegenerateProjectionError, ShapeError

D_EPS = 1e-4
_IDENTITY8 = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0)


def translation(dx, dy, dtype=torch.float64):
    """Homography that maps (w, h) to (w + dx, h + dy)."""
    return torch.tensor([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]], dtype=dtype)


def project(u, M, *, d_eps=D_EPS):
    """Apply ``M`` to homogeneous points ``u`` (..., 3) and normalize by the third coordinate.

    Returns a (..., 2) array/tensor of (w'', h''). Raises
    DegenerateProjectionError when |d'| < d_eps at any point.
    """
    as_numpy = not torch.is_tensor(u) and not torch.is_tensor(M)
    u = torch.as_tensor(np.asarray(u, np.float64)) if not torch.is_tensor(u) else u
    M = torch.as_tensor(np.asarray(M, np.float64), dtype=u.dtype) if not torch.is_tensor(M) else M
    up = torch.einsum("...ij,...j->...i", M, u)
    d = up[..., 2]
    bad = d.abs() < d_eps
    if torch.any(bad):
        idx = tuple(torch.nonzero(bad)[0].tolist())
        raise DegenerateProjectionError(f"|d'| < {d_eps} at point {idx}", index=idx)
    out = up[..., :2] / d[..., None]
    return out.numpy() if as_numpy else out


def sampling_grid(M, h, w, *, d_eps=D_EPS):
    """Sampling coordinates (N, h, w, 2) of every output position under ``M`` (N, 3, 3)."""
    rows = torch.arange(h, dtype=M.dtype, device=M.device)
    cols = torch.arange(w, dtype=M.dtype, device=M.device)
    hh, ww = torch.meshgrid(rows, cols, indexing="ij")
    u = torch.stack([ww, hh, torch.ones_like(ww)], -1)
    return project(u[None], M[:, None, None], d_eps=d_eps)


def bilinear_sample(x, coords):
    """Sample ``x`` (N, C, h, w) at real coordinates (N, H', W', 2) given as (w, h)."""
    n, c, h, w = x.shape
    cx, cy = coords[..., 0], coords[..., 1]
    x0 = torch.floor(cx)
    y0 = torch.floor(cy)
    fx = cx - x0
    fy = cy - y0
    flat = x.reshape(n, c, h * w)
    out = 0
    for dx, wx in ((0, 1 - fx), (1, fx)):
        for dy, wy in ((0, 1 - fy), (1, fy)):
            xi = x0 + dx
            yi = y0 + dy
            valid = (xi >= 0) & (xi <= w - 1) & (yi >= 0) & (yi <= h - 1)
            idx = (yi.clamp(0, h - 1) * w + xi.clamp(0, w - 1)).long()
            gathered = torch.gather(flat, 2, idx.reshape(n, 1, -1).expand(n, c, -1))
            gathered = gathered.reshape(n, c, *idx.shape[1:])
            weight = (wx * wy * valid.to(x.dtype))[:, None]
            out = out + gathered * weight
    return out


def warp(side, M, *, d_eps=D_EPS):
    """Side-information tensor: ``side`` resampled at the projected grid positions."""
    if M.ndim == 2:
        M = M[None].expand(side.shape[0], 3, 3)
    n, c, h, w = side.shape
    coords = sampling_grid(M.to(side.dtype), h, w, d_eps=d_eps)
    return bilinear_sample(side, coords)


class LocalizationNet(nn.Module):
    """Three stride-2 convolutions and two fully connected layers emitting 8 homography entries.

    The last layer starts at zero weight with identity bias so a fresh network
    outputs the identity matrix; m33 is fixed to 1. The perspective entries
    pass through tanh and are scaled by the grid size so that d' stays within
    [0.5, 1.5] over the grid and the projection can never degenerate.
    """

    def __init__(self, latent_channels, width=32, hidden=32):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(2 * latent_channels, width, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(width, width, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(width, width, 3, stride=2, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
        )
        self.fc1 = nn.Linear(width, hidden)
        self.fc2 = nn.Linear(hidden, 8)
        nn.init.zeros_(self.fc2.weight)
        with torch.no_grad():
            self.fc2.bias.copy_(torch.tensor(_IDENTITY8))

    def forward(self, main, side):
        if main.shape != side.shape:
            raise ShapeError(f"main {tuple(main.shape)} and side {tuple(side.shape)} latents differ")
        f = self.features(torch.cat([main, side], 1)).flatten(1)
        theta = self.fc2(torch.relu(self.fc1(f)))
        h, w = main.shape[-2:]
        bound = theta.new_tensor([0.25 / w, 0.25 / h])
        theta = torch.cat([theta[:, :6], torch.tanh(theta[:, 6:]) * bound], 1)
        ones = torch.ones_like(theta[:, :1])
        return torch.cat([theta, ones], 1).reshape(-1, 3, 3)


class TransformationModule(nn.Module):
    """Localize, build the grid and resample: returns (SI, M)."""

    def __init__(self, latent_channels, width=32, hidden=32):
        super().__init__()
        self.localization = LocalizationNet(latent_channels, width, hidden)

    def forward(self, main, side):
        M = self.localization(main, side)
        return warp(side, M), M
