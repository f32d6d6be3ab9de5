"""Multi-level sequence GAN for group activity recognition, on a small numpy autodiff core."""

__version__ = "0.1.0"

from .autodiff import Tensor, backward, finite_diff_check, no_grad
from .codes import decode, encode_ground_truth
from .data import Dataset, SceneSample, SyntheticConfig, generate_synthetic, load_features, save_dataset, split
from .estimator import MLSGANClassifier
from .exceptions import (
    ConfigError,
    ContractError,
    DimensionError,
    DomainError,
    FormatError,
    MLSGANError,
    NumericError,
    ParseError,
    TrainingError,
)
from .fusion import GatedFusionUnit, gate_activations, gfu_forward, gfu_pair_forward
from .metrics import MetricsReport, confusion_matrix, mca, mpca
from .models import VARIANTS, Discriminator, Generator, ModelConfig, build_variant
from .training import (
    TrainConfig,
    classify,
    evaluate,
    gate_attention_report,
    load_model,
    predict,
    probe_codes,
    save_model,
    train,
)

__all__ = [
    "Tensor", "backward", "finite_diff_check", "no_grad",
    "decode", "encode_ground_truth",
    "Dataset", "SceneSample", "SyntheticConfig", "generate_synthetic", "load_features", "save_dataset", "split",
    "MLSGANClassifier",
    "ConfigError", "ContractError", "DimensionError", "DomainError", "FormatError", "MLSGANError",
    "NumericError", "ParseError", "TrainingError",
    "GatedFusionUnit", "gate_activations", "gfu_forward", "gfu_pair_forward",
    "MetricsReport", "confusion_matrix", "mca", "mpca",
    "VARIANTS", "Discriminator", "Generator", "ModelConfig", "build_variant",
    "TrainConfig", "classify", "evaluate", "gate_attention_report", "load_model", "predict", "probe_codes",
    "save_model", "train",
]
