"""Graph-based distantly supervised relation extraction.

Query-sentence attention, a piecewise CNN encoder, sentence-bag graph
self-attention and selective attention, trained with plain SGD on a small
numpy autodiff core.
"""

from .config import PRESETS, TrainConfig, preset
from .model import ModelParams, forward, init_params, score_bags

__version__ = "0.1.0"

__all__ = ["PRESETS", "TrainConfig", "preset", "ModelParams", "forward", "init_params",
           "score_bags"]
