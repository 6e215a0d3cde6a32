"""Distributed learned image coding for two correlated sources.

Two pipelines share analysis/synthesis transforms, a joint hyperprior and a
latent alignment module: a separate source/channel coder producing real
range-coded bitstreams (``NTSCSystem``) and a joint source-channel coder
over simulated AWGN links (``NTSCCSystem``).
"""

__version__ = "0.1.0"

from .channel import ChannelSpec, awgn_transmit, capacity
from .estimators import DistributedNTSC, DistributedNTSCC
from .exceptions import (
    CheckpointError,
    ConfigurationError,
    DecodeError,
    DegenerateProjectionError,
    DNTSCError,
    FramingError,
    IngestionError,
    InputError,
    ParameterError,
    ShapeError,
    TrainingError,
)
from .models import NTSCCSystem, NTSCSystem, SystemOptions, build_system
from .transforms import TransformConfig

__all__ = [
    "ChannelSpec", "awgn_transmit", "capacity", "DistributedNTSC", "DistributedNTSCC", "CheckpointError",
    "ConfigurationError", "DecodeError", "DegenerateProjectionError", "DNTSCError", "FramingError",
    "IngestionError", "InputError", "ParameterError", "ShapeError", "TrainingError", "NTSCSystem",
    "NTSCCSystem", "SystemOptions", "build_system", "TransformConfig",
]
