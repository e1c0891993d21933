"""Reference inference engine (direct convolution, inference-mode norm)."""

from . import backend
from .network import WeightBundle, block_forward, features, forward, head, init_weights
from .ops import conv3d

__all__ = [
    "WeightBundle",
    "backend",
    "block_forward",
    "conv3d",
    "features",
    "forward",
    "head",
    "init_weights",
]
