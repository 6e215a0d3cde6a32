from .data import DatasetSpec, StereoPair, load_stereo, preprocess, random_homography, stack_pairs, synth_pairs
from .evaluate import (
    RDPoint,
    evaluate,
    evaluate_sweep,
    match_rate_at_psnr,
    param_count,
    plot,
    points_csv,
    points_json,
    read_points,
)
from .metrics import PSNR_CAP, bitrate_bpp, ms_ssim, mse, psnr

__all__ = [
    "DatasetSpec", "StereoPair", "load_stereo", "preprocess", "random_homography", "stack_pairs", "synth_pairs",
    "RDPoint", "evaluate", "evaluate_sweep", "match_rate_at_psnr", "param_count", "plot", "points_csv",
    "points_json", "read_points", "PSNR_CAP", "bitrate_bpp", "ms_ssim", "mse", "psnr",
]
