"""3D convolutional local decoders."""

from .decoding import (
    binarise,
    diffusion_decode,
    diffusion_passes,
    local_decode,
    mean_output_entropy,
    residual_of,
    soft_correction,
)
from .fuzzy import fuzzy_fold, fuzzy_residual, fuzzy_xor
from .model import (
    VARIANTS,
    ModelParams,
    forward,
    init_params,
    input_channels,
    load_checkpoint,
    loss_and_grad,
    save_checkpoint,
)
from .training import TrainConfig, TrainingDiverged, TrainingSet, generate_dataset, load_or_train, train

__all__ = [
    "VARIANTS",
    "ModelParams",
    "TrainConfig",
    "TrainingDiverged",
    "TrainingSet",
    "binarise",
    "diffusion_decode",
    "diffusion_passes",
    "forward",
    "fuzzy_fold",
    "fuzzy_residual",
    "fuzzy_xor",
    "generate_dataset",
    "init_params",
    "input_channels",
    "load_checkpoint",
    "load_or_train",
    "local_decode",
    "loss_and_grad",
    "mean_output_entropy",
    "residual_of",
    "save_checkpoint",
    "soft_correction",
    "train",
]
