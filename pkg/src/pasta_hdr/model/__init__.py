from .checkpoint import ConfigMismatch, load_checkpoint, read_checkpoint, save_checkpoint
from .config import MODEL_KEYS, SAMPLINGS, VARIANTS, ModelConfig, preset
from .network import (
    IFTA, RCAB, RSTB, SAMPLERS, ChannelAttention, FinalStage, PASTANet, StageState, SwinLayer,
    WaveletStage, WindowAttention, count_params, relative_position_index,
)

__all__ = [
    "ConfigMismatch", "load_checkpoint", "read_checkpoint", "save_checkpoint",
    "MODEL_KEYS", "SAMPLINGS", "VARIANTS", "ModelConfig", "preset",
    "IFTA", "RCAB", "RSTB", "SAMPLERS", "ChannelAttention", "FinalStage", "PASTANet",
    "StageState", "SwinLayer", "WaveletStage", "WindowAttention", "count_params", "relative_position_index",
]
