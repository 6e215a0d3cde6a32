from .config import TransformConfig
from .nets import (
    AnalysisTransform,
    HyperAnalysis,
    HyperSynthesis,
    SynthesisTransform,
    hyper_shape,
    latent_grid,
    latent_tokens,
)
from .swin import SwinBlock, SwinStage, WindowAttention

__all__ = [
    "TransformConfig", "AnalysisTransform", "SynthesisTransform", "HyperAnalysis", "HyperSynthesis",
    "hyper_shape", "latent_grid", "latent_tokens", "SwinBlock", "SwinStage", "WindowAttention",
]
