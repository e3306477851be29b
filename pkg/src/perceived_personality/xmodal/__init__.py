from .attention import EPS_DEN, cross_modal_block, feature_map, linear_attention
from .model import (
    DEFAULT_INPUT_DIMS,
    MODALITIES,
    GradCheckResult,
    HyperConfig,
    ModalitySequence,
    ModelParams,
    forward,
    forward_scores,
    grad_check,
    init_params,
    mse_loss,
    train,
)
from .serialize import load_params, save_params

__all__ = [
    "DEFAULT_INPUT_DIMS",
    "EPS_DEN",
    "MODALITIES",
    "GradCheckResult",
    "HyperConfig",
    "ModalitySequence",
    "ModelParams",
    "cross_modal_block",
    "feature_map",
    "forward",
    "forward_scores",
    "grad_check",
    "init_params",
    "linear_attention",
    "load_params",
    "mse_loss",
    "save_params",
    "train",
]
