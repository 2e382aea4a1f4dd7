"""Text-conditioned mask separator: model, training, checkpoints, inference."""

from .checkpoint import LoadedCheckpoint, load_checkpoint, save_checkpoint
from .inference import separate
from .model import (
    SeparatorConfig,
    SeparatorModel,
    TextEmbedding,
    Tokenizer,
    encode_text,
    full_scale_config,
    micro_config,
    predict_mask,
)
from .training import (
    PROMPT_SETS,
    EpochStats,
    TrainConfig,
    TrainResult,
    full_schedule,
    multilevel_loss,
    sample_tree,
    train,
)

__all__ = [
    "EpochStats",
    "LoadedCheckpoint",
    "PROMPT_SETS",
    "SeparatorConfig",
    "SeparatorModel",
    "TextEmbedding",
    "Tokenizer",
    "TrainConfig",
    "TrainResult",
    "encode_text",
    "full_scale_config",
    "full_schedule",
    "load_checkpoint",
    "micro_config",
    "multilevel_loss",
    "predict_mask",
    "sample_tree",
    "save_checkpoint",
    "separate",
    "train",
]
