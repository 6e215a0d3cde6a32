"""Analysis, joint synthesis and hyper transforms."""

import torch
import torch.nn.functional as F
from torch import nn

from .._validation import DOWNSAMPLE
from ..entropy_models.gaussian import SIGMA_MIN
from ..exceptions import InputError, ShapeError
from .swin import SwinStage, nchw_to_nhwc, nhwc_to_nchw


def _check_image_tensor(x):
    if x.ndim != 4 or x.shape[1] != 3:
        raise ShapeError(f"expected images of shape (N, 3, H, W), got {tuple(x.shape)}")
    if x.shape[2] % DOWNSAMPLE or x.shape[3] % DOWNSAMPLE:
        raise ShapeError(f"image size {x.shape[2]}x{x.shape[3]} is not divisible by {DOWNSAMPLE}")
    if torch.isnan(x).any():
        raise InputError("image contains NaN values")


class AnalysisTransform(nn.Module):
    """Image (N, 3, H, W) -> latent (N, C4, H/16, W/16)."""

    def __init__(self, cfg):
        super().__init__()
        c = cfg.channels_per_stage
        self.embed = nn.Conv2d(3, c[0], cfg.patch_size, stride=cfg.patch_size)
        self.embed_norm = nn.LayerNorm(c[0])
        self.stages = nn.ModuleList(
            SwinStage(c[i], cfg.blocks_per_stage[i], cfg.heads_per_stage[i], cfg.window_size,
                      cfg.shift_size, cfg.mlp_ratio)
            for i in range(4)
        )
        self.merges = nn.ModuleList(nn.Conv2d(c[i], c[i + 1], 2, stride=2) for i in range(3))

    def forward(self, x):
        _check_image_tensor(x)
        h = self.embed_norm(nchw_to_nhwc(self.embed(x)))
        for i, stage in enumerate(self.stages):
            h = stage(h)
            if i < 3:
                h = nchw_to_nhwc(self.merges[i](nhwc_to_nchw(h)))
        return nhwc_to_nchw(h).contiguous()


class SynthesisTransform(nn.Module):
    """Joint decoder: main latent concatenated with aligned side latent -> image.

    A single instance serves both users; the caller swaps the argument order.
    """

    def __init__(self, cfg):
        super().__init__()
        c = cfg.channels_per_stage
        self.fuse = nn.Linear(2 * c[3], c[3])
        order = (3, 2, 1, 0)
        self.stages = nn.ModuleList(
            SwinStage(c[i], cfg.blocks_per_stage[i], cfg.heads_per_stage[i], cfg.window_size,
                      cfg.shift_size, cfg.mlp_ratio)
            for i in order
        )
        self.expands = nn.ModuleList(nn.ConvTranspose2d(c[i], c[i - 1], 2, stride=2) for i in (3, 2, 1))
        self.unembed = nn.ConvTranspose2d(c[0], 3, cfg.patch_size, stride=cfg.patch_size)
        with torch.no_grad():
            self.unembed.bias.fill_(0.5)

    def forward(self, main, side):
        if main.shape != side.shape:
            raise ShapeError(f"main {tuple(main.shape)} and side {tuple(side.shape)} latents differ")
        h = self.fuse(nchw_to_nhwc(torch.cat([main, side], 1)))
        for i, stage in enumerate(self.stages):
            h = stage(h)
            if i < 3:
                h = nchw_to_nhwc(self.expands[i](nhwc_to_nchw(h)))
        x = self.unembed(nhwc_to_nchw(h))
        return torch.clamp(x, 0.0, 1.0)


class HyperAnalysis(nn.Module):
    """Latent -> hyperprior with two stride-2 stages (spatial /4, rounded up)."""

    def __init__(self, cfg):
        super().__init__()
        c, hc = cfg.latent_channels, cfg.hyper_channels
        self.net = nn.Sequential(
            nn.Conv2d(c, hc, 3, padding=1), nn.ReLU(),
            nn.Conv2d(hc, hc, 5, stride=2, padding=2), nn.ReLU(),
            nn.Conv2d(hc, hc, 5, stride=2, padding=2),
        )

    def forward(self, y):
        return self.net(y)


class HyperSynthesis(nn.Module):
    """Hyperprior -> (mu, sigma) of the latent; sigma = max(softplus(.), SIGMA_MIN)."""

    def __init__(self, cfg):
        super().__init__()
        c, hc = cfg.latent_channels, cfg.hyper_channels
        self.latent_channels = c
        self.net = nn.Sequential(
            nn.ConvTranspose2d(hc, hc, 5, stride=2, padding=2, output_padding=1), nn.ReLU(),
            nn.ConvTranspose2d(hc, hc, 5, stride=2, padding=2, output_padding=1), nn.ReLU(),
            nn.Conv2d(hc, 2 * c, 3, padding=1),
        )

    def forward(self, z, latent_hw):
        h, w = latent_hw
        out = self.net(z)[..., :h, :w]
        mu, raw = out.split(self.latent_channels, 1)
        sigma = torch.clamp(F.softplus(raw), min=SIGMA_MIN)
        return mu, sigma


def latent_tokens(y):
    """(N, C, h, w) -> row-major token view (N, h*w, C)."""
    return y.flatten(2).transpose(1, 2)


def latent_grid(tokens, h, w):
    """Inverse of :func:`latent_tokens`."""
    n, l, c = tokens.shape
    if l != h * w:
        raise ShapeError(f"{l} tokens cannot fill a {h}x{w} grid")
    return tokens.transpose(1, 2).reshape(n, c, h, w)


def hyper_shape(h, w):
    return (h + 3) // 4, (w + 3) // 4
