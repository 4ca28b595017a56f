from .layers import Conv2d, Dense, ReLU
from .network import (
    ARCH_REVISION,
    LAYER_SPECS,
    MICROBATCH,
    OUTPUT_SIZE,
    PATCH_SIZE,
    Adadelta,
    JointNet,
    clamp_outputs,
    mse_loss,
    train,
)
from .serialize import (
    ArchitectureMismatchError,
    ModelFileError,
    load_model,
    save_model,
)

__all__ = [
    "ARCH_REVISION",
    "Adadelta",
    "ArchitectureMismatchError",
    "Conv2d",
    "Dense",
    "JointNet",
    "LAYER_SPECS",
    "MICROBATCH",
    "ModelFileError",
    "OUTPUT_SIZE",
    "PATCH_SIZE",
    "ReLU",
    "clamp_outputs",
    "load_model",
    "mse_loss",
    "save_model",
    "train",
]
