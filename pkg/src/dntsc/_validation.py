"""Input validation helpers used by the estimators, the codecs and the CLI."""

import numbers

import numpy as np
import torch

from .exceptions import InputError, ParameterError, ShapeError

DOWNSAMPLE = 16


def check_image(x, *, multiple=DOWNSAMPLE, name="image"):
    """Validate a single RGB image and return it as a float64 (H, W, 3) array.

    Raises InputError for NaNs or values outside [0, 1] and ShapeError when the
    spatial size is not a multiple of ``multiple``.
    """
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[-1] != 3:
        raise ShapeError(f"{name} must have shape (H, W, 3), got {x.shape}")
    x = x.astype(np.float64, copy=False)
    if not np.all(np.isfinite(x)):
        raise InputError(f"{name} contains NaN or infinite values")
    if x.min(initial=0.0) < 0.0 or x.max(initial=0.0) > 1.0:
        raise InputError(f"{name} pixel values must lie in [0, 1]")
    h, w = x.shape[:2]
    if h % multiple or w % multiple:
        raise ShapeError(f"{name} size {h}x{w} is not divisible by {multiple}")
    return x


def check_pairs(X, *, multiple=DOWNSAMPLE):
    """Validate a batch of stereo pairs, shape (n, 2, H, W, 3)."""
    X = np.asarray(X)
    if X.ndim == 4 and X.shape[0] == 2:
        X = X[None]
    if X.ndim != 5 or X.shape[1] != 2 or X.shape[-1] != 3:
        raise ShapeError(f"stereo pairs must have shape (n, 2, H, W, 3), got {X.shape}")
    if X.shape[0] == 0:
        raise InputError("no stereo pairs given")
    X = X.astype(np.float64, copy=False)
    if not np.all(np.isfinite(X)):
        raise InputError("stereo pairs contain NaN or infinite values")
    if X.min() < 0.0 or X.max() > 1.0:
        raise InputError("pixel values must lie in [0, 1]")
    h, w = X.shape[2:4]
    if h % multiple or w % multiple:
        raise ShapeError(f"image size {h}x{w} is not divisible by {multiple}")
    return X


def check_same_shape(a, b, what="inputs"):
    if tuple(a.shape) != tuple(b.shape):
        raise ShapeError(f"{what} differ in shape: {tuple(a.shape)} vs {tuple(b.shape)}")


def check_positive(value, name, *, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ParameterError(f"{name} must be a finite real number, got {value!r}")
    if value < 0 or (strict and value == 0):
        raise ParameterError(f"{name} must be {'> 0' if strict else '>= 0'}, got {value!r}")
    return value


def to_nchw(images, dtype=torch.float32):
    """(..., H, W, 3) numpy array -> (N, 3, H, W) tensor."""
    t = torch.as_tensor(np.asarray(images), dtype=dtype)
    if t.ndim == 3:
        t = t[None]
    return t.permute(0, 3, 1, 2).contiguous()


def to_nhwc(t):
    """(N, 3, H, W) tensor -> (N, H, W, 3) float64 numpy array."""
    return t.detach().permute(0, 2, 3, 1).to(torch.float64).cpu().numpy()
