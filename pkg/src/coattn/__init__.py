"""Weakly supervised segmentation via pair attention on synthetic data."""

from .data import DatasetSpec, ImageSample, generate, read_dataset, write_dataset
from .estimator import CoAttentionSegmenter
from .inference import InferConfig, infer_multi, infer_single, to_pseudo_mask
from .labels import LabelVector
from .model import ModelParams, init_params, load_params, loss_total, save_params
from .tensor import Tensor, backward, finite_diff_grad
from .training import TrainConfig, ablation_suite, train

__all__ = [
    "CoAttentionSegmenter", "DatasetSpec", "ImageSample", "InferConfig",
    "LabelVector", "ModelParams", "Tensor", "TrainConfig", "ablation_suite",
    "backward", "finite_diff_grad", "generate", "infer_multi", "infer_single",
    "init_params", "load_params", "loss_total", "read_dataset", "save_params",
    "to_pseudo_mask", "train", "write_dataset",
]

__version__ = "0.1.0"
