"""Flat ``key = value`` run configuration shared by every CLI command."""

import json
from pathlib import Path

from ..exceptions import ConfigurationError

# key: (default, type) ; lists are comma separated
DEFAULTS = {
    # model
    "pipeline": ("ntsc", str),
    "preset": ("desk", str),
    "channels": ("", "ints"),
    "blocks": ("", "ints"),
    "heads": ("", "ints"),
    "hyper_channels": (0, int),
    "window_size": (4, int),
    "shift_size": (2, int),
    "loc_width": (0, int),
    "K": (1, int),
    "joint_hyper": (True, bool),
    "side_info": (True, bool),
    "tied_init": (True, bool),
    "bandwidths": ("", "ints"),
    "eta": (1.0, float),
    "jscc_width": (64, int),
    "jscc_heads": (4, int),
    "power": (1.0, float),
    # training
    "seed": (0, int),
    "epochs": (10, int),
    "batch_size": (2, int),
    "lr_init": (1e-4, float),
    "lr_final": (1e-6, float),
    "prior_lr_scale": (10.0, float),
    "weight": (64.0, float),
    "distortion": ("mse", str),
    "steps_per_epoch": (0, int),
    "checkpoint_every": (0, int),
    "grad_clip": (0.0, float),
    # channel
    "snr_db": (10.0, float),
    "snr_db_user2": ("", "optfloat"),
    # data
    "data": ("synth", str),
    "data_root": ("", str),
    "recipe": ("kitti", str),
    "synth_height": (64, int),
    "synth_width": (128, int),
    "synth_train": (64, int),
    "synth_val": (4, int),
    "synth_test": (8, int),
    "homography_range": (0.05, float),
    "noise_level": (0.01, float),
}


def _parse(key, raw):
    if key not in DEFAULTS:
        raise ConfigurationError(f"unknown config key {key!r}")
    default, kind = DEFAULTS[key]
    raw = raw.strip() if isinstance(raw, str) else raw
    if not isinstance(raw, str):
        return raw
    try:
        if kind == "ints":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if kind == "optfloat":
            return float(raw) if raw else None
        if kind is bool:
            low = raw.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("1", "true", "yes", "on")
        return kind(raw)
    except ValueError:
        raise ConfigurationError(f"bad value {raw!r} for {key}") from None


def defaults():
    return {k: (None if kind == "optfloat" and v == "" else (() if kind == "ints" else v))
            for k, (v, kind) in DEFAULTS.items()}


def parse_lines(text):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _parse(key, value)
    return out


def resolve(path=None, overrides=()):
    """Defaults, then the config file, then ``key=value`` overrides."""
    cfg = defaults()
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigurationError(f"config file {p} not found")
        cfg.update(parse_lines(p.read_text()))
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        cfg[key.strip()] = _parse(key.strip(), value)
    return cfg


def dumps(cfg):
    def fmt(v):
        if isinstance(v, tuple):
            return ",".join(str(x) for x in v)
        if v is None:
            return ""
        if isinstance(v, bool):
            return "true" if v else "false"
        return str(v)

    return "".join(f"{k} = {fmt(cfg[k])}\n" for k in sorted(cfg))


def to_json(cfg):
    return json.loads(json.dumps({k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()}))
