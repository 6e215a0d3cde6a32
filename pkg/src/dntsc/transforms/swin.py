"""Windowed self-attention blocks with shifted windows, channels-last layout."""

import math

import torch
from torch import nn


def effective_window(h, w, window):
    """Largest window side <= ``window`` that tiles an h x w grid exactly."""
    g = math.gcd(h, w)
    for ws in range(min(window, g), 0, -1):
        if g % ws == 0:
            return ws
    return 1


def window_partition(x, ws):
    n, h, w, c = x.shape
    x = x.reshape(n, h // ws, ws, w // ws, ws, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, ws * ws, c)


def window_merge(windows, ws, n, h, w):
    c = windows.shape[-1]
    x = windows.reshape(n, h // ws, w // ws, ws, ws, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(n, h, w, c)


def _shift_mask(h, w, ws, shift, device):
    img = torch.zeros(1, h, w, 1, device=device)
    cnt = 0
    for hs in (slice(0, -ws), slice(-ws, -shift), slice(-shift, None)):
        for wsl in (slice(0, -ws), slice(-ws, -shift), slice(-shift, None)):
            img[:, hs, wsl, :] = cnt
            cnt += 1
    win = window_partition(img, ws).squeeze(-1)
    mask = win[:, None, :] - win[:, :, None]
    return mask != 0


class WindowAttention(nn.Module):
    def __init__(self, dim, heads, window):
        super().__init__()
        self.heads = heads
        self.window = window
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.bias_table = nn.Parameter(torch.zeros((2 * window - 1) ** 2, heads))
        nn.init.trunc_normal_(self.bias_table, std=0.02)

    def _relative_index(self, ws, device):
        coords = torch.stack(torch.meshgrid(torch.arange(ws), torch.arange(ws), indexing="ij")).flatten(1)
        rel = coords[:, :, None] - coords[:, None, :] + (self.window - 1)
        return (rel[0] * (2 * self.window - 1) + rel[1]).to(device)

    def forward(self, x, ws, mask=None):
        b, t, c = x.shape
        qkv = self.qkv(x).reshape(b, t, 3, self.heads, c // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q * self.scale) @ k.transpose(-2, -1)
        bias = self.bias_table[self._relative_index(ws, x.device).reshape(-1)]
        attn = attn + bias.reshape(t, t, -1).permute(2, 0, 1)[None]
        if mask is not None:
            nw = mask.shape[0]
            attn = attn.reshape(b // nw, nw, self.heads, t, t)
            attn = attn.masked_fill(mask[None, :, None], float("-inf")).reshape(b, self.heads, t, t)
        attn = attn.softmax(-1)
        out = (attn @ v).transpose(1, 2).reshape(b, t, c)
        return self.proj(out)


class SwinBlock(nn.Module):
    def __init__(self, dim, heads, window, shift, mlp_ratio=4.0):
        super().__init__()
        self.window = window
        self.shift = shift
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, window)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x):
        n, h, w, c = x.shape
        ws = effective_window(h, w, self.window)
        shift = min(self.shift, ws // 2) if (h > ws or w > ws) else 0
        y = self.norm1(x)
        mask = None
        if shift:
            y = torch.roll(y, (-shift, -shift), dims=(1, 2))
            mask = _shift_mask(h, w, ws, shift, x.device)
        y = window_merge(self.attn(window_partition(y, ws), ws, mask), ws, n, h, w)
        if shift:
            y = torch.roll(y, (shift, shift), dims=(1, 2))
        x = x + y
        return x + self.mlp(self.norm2(x))


class SwinStage(nn.Module):
    """``depth`` blocks alternating regular and shifted windows."""

    def __init__(self, dim, depth, heads, window, shift, mlp_ratio=4.0):
        super().__init__()
        self.blocks = nn.ModuleList(
            SwinBlock(dim, heads, window, shift if i % 2 else 0, mlp_ratio) for i in range(depth)
        )

    def forward(self, x):
        for blk in self.blocks:
            x = blk(x)
        return x


def nchw_to_nhwc(x):
    return x.permute(0, 2, 3, 1)


def nhwc_to_nchw(x):
    return x.permute(0, 3, 1, 2)

