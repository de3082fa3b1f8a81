from .network import (
    GradientError,
    MaskNet,
    ModelError,
    NetConfig,
    TrainingExample,
    init,
    l1_loss,
)
from .optim import AdamState, adam_step
from .checkpoint import (
    CheckpointError,
    load_checkpoint,
    read_metadata,
    save_checkpoint,
)

__all__ = [
    "AdamState",
    "CheckpointError",
    "GradientError",
    "MaskNet",
    "ModelError",
    "NetConfig",
    "TrainingExample",
    "adam_step",
    "init",
    "l1_loss",
    "load_checkpoint",
    "read_metadata",
    "save_checkpoint",
]
