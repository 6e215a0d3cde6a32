"""Stereo dataset ingestion and synthetic correlated pairs."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..alignment import project
from ..exceptions import ConfigurationError, IngestionError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".ppm")
TARGET_HW = (128, 256)
RECIPES = ("kitti", "cityscapes", "none")


@dataclass(frozen=True)
class DatasetSpec:
    """Paired left/right directories under ``root[/split]`` matched by filename."""

    root: str
    recipe: str = "kitti"
    split: str = ""
    left: str = "left"
    right: str = "right"
    size: tuple = TARGET_HW
    shuffle_seed: int = -1

    def __post_init__(self):
        if self.recipe not in RECIPES:
            raise ConfigurationError(f"recipe must be one of {RECIPES}")


@dataclass
class StereoPair:
    name: str
    x1: np.ndarray
    x2: np.ndarray
    homography: np.ndarray = None


def center_crop(img, h, w):
    W, H = img.size
    if H < h or W < w:
        raise IngestionError(f"image {W}x{H} is smaller than the {w}x{h} crop", [])
    top, left = (H - h) // 2, (W - w) // 2
    return img.crop((left, top, left + w, top + h))


def preprocess(img, recipe, size=TARGET_HW):
    """KITTI: centre crop 370x740 then resize; Cityscapes: resize directly."""
    img = img.convert("RGB")
    if recipe == "kitti":
        img = center_crop(img, 370, 740)
    if recipe != "none":
        img = img.resize((size[1], size[0]), Image.BICUBIC)
    return np.asarray(img, dtype=np.float64) / 255.0


def _listing(folder):
    if not folder.is_dir():
        raise IngestionError(f"missing directory {folder}", [str(folder)])
    return {p.name: p for p in sorted(folder.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def stereo_names(spec):
    base = Path(spec.root) / spec.split if spec.split else Path(spec.root)
    left, right = _listing(base / spec.left), _listing(base / spec.right)
    if not left and not right:
        raise IngestionError(f"no images under {base}", [])
    offenders = sorted(set(left) ^ set(right))
    if offenders:
        raise IngestionError(f"{len(offenders)} images lack a counterpart: {offenders[:5]}", offenders)
    names = sorted(left)
    if spec.shuffle_seed >= 0:
        names = [names[i] for i in np.random.default_rng(spec.shuffle_seed).permutation(len(names))]
    return [(n, left[n], right[n]) for n in names]


def load_stereo(spec):
    """Yield preprocessed StereoPairs in deterministic order."""
    for name, lp, rp in stereo_names(spec):
        with Image.open(lp) as a, Image.open(rp) as b:
            x1, x2 = preprocess(a, spec.recipe, spec.size), preprocess(b, spec.recipe, spec.size)
        if x1.shape != x2.shape:
            raise IngestionError(f"{name}: left and right sizes differ after preprocessing", [name])
        yield StereoPair(name, x1, x2)


class _Texture:
    """Smooth random colour field that can be evaluated at any (col, row)."""

    def __init__(self, rng, h, w, waves=16, blobs=6):
        scale = max(h, w)
        freq = rng.uniform(0.5, 10.0, waves) / scale
        theta = rng.uniform(0, np.pi, waves)
        self.k = np.stack([np.cos(theta), np.sin(theta)], 1) * (2 * np.pi * freq)[:, None]
        self.phase = rng.uniform(0, 2 * np.pi, waves)
        self.amp = rng.normal(0, 1, (waves, 3)) * (0.08 / (1 + freq * scale / 3))[:, None]
        self.centres = rng.uniform(0, 1, (blobs, 2)) * [w, h]
        self.radii = rng.uniform(0.08, 0.3, blobs) * scale
        self.colours = rng.normal(0, 0.2, (blobs, 3))
        self.base = rng.uniform(0.35, 0.65, 3)

    def __call__(self, cols, rows):
        pts = np.stack([cols, rows], -1)
        out = np.broadcast_to(self.base, pts.shape[:-1] + (3,)).copy()
        out += np.sin(pts @ self.k.T + self.phase) @ self.amp
        for c, r, col in zip(self.centres, self.radii, self.colours):
            d2 = ((pts - c) ** 2).sum(-1) / r ** 2
            out += np.exp(-d2)[..., None] * col
        return np.clip(out, 0.0, 1.0)


def random_homography(rng, h, w, homography_range):
    """Near-identity homography: mostly horizontal shift, slight affine and perspective terms."""
    s = homography_range
    M = np.eye(3)
    M[:2, :2] += rng.uniform(-s / 4, s / 4, (2, 2))
    M[0, 2] = rng.uniform(-s, s) * w
    M[1, 2] = rng.uniform(-s / 4, s / 4) * h
    M[2, :2] = rng.uniform(-s / 8, s / 8, 2) / np.array([w, h])
    return M


def synth_pairs(n, base_size=(64, 128), homography_range=0.05, noise_level=0.01, seed=0):
    """Seeded correlated pairs; yields StereoPair with the recorded homography.

    The second view is rendered exactly at the warped coordinates, so
    ``warp(x2, homography)`` recovers ``x1`` up to interpolation error and
    the added pixel noise.
    """
    h, w = base_size
    rng = np.random.default_rng(seed)
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    grid = np.stack([cols, rows, np.ones_like(cols)], -1).reshape(-1, 3)
    for i in range(n):
        tex = _Texture(rng, h, w)
        M = random_homography(rng, h, w, homography_range) if homography_range > 0 else np.eye(3)
        x1 = tex(cols, rows)
        src = project(grid, np.linalg.inv(M)).reshape(h, w, 2)
        x2 = tex(src[..., 0], src[..., 1])
        if noise_level > 0:
            x2 = np.clip(x2 + rng.normal(0, noise_level, x2.shape), 0.0, 1.0)
        yield StereoPair(f"synth_{i:05d}", x1, x2, M)


def stack_pairs(pairs, dtype=torch.float32):
    """List of StereoPairs -> two (n, 3, H, W) tensors."""
    pairs = list(pairs)
    if not pairs:
        raise IngestionError("empty dataset", [])
    x1 = np.stack([p.x1 for p in pairs]).transpose(0, 3, 1, 2)
    x2 = np.stack([p.x2 for p in pairs]).transpose(0, 3, 1, 2)
    return torch.as_tensor(x1, dtype=dtype).contiguous(), torch.as_tensor(x2, dtype=dtype).contiguous()
