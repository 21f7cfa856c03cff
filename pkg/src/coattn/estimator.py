"""Scikit-learn style estimator wrapping the full pipeline.

`fit` trains the pair classifier on a list of ImageSamples, `predict`
returns pseudo segmentation masks, `score` reports mean IoU against the
samples' ground-truth masks. Parameters follow the get_params/set_params
convention so the estimator composes with sklearn tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .data import ImageSample
from .errors import ContractError
from .evaluation import miou
from .inference import InferConfig, infer_multi, infer_single, to_pseudo_mask
from .training import TrainConfig, train


def _check_samples(samples, require_masks: bool = False) -> list[ImageSample]:
    if not samples:
        raise ContractError("empty sample list")
    for s in samples:
        if not isinstance(s, ImageSample):
            raise ContractError(f"expected ImageSample, got {type(s).__name__}")
    k = samples[0].labels.num_classes
    for s in samples:
        if s.labels.num_classes != k:
            raise ContractError("samples disagree on class count")
        if s.pixels.ndim != 3 or s.pixels.shape[0] != 3:
            raise ContractError(f"pixels must be 3×H×W, got {s.pixels.shape}")
        if require_masks and s.mask is None:
            raise ContractError(f"sample {s.id!r} has no ground-truth mask")
    return list(samples)


class CoAttentionSegmenter(BaseEstimator):
    """Weakly supervised segmenter trained from image-level labels only."""

    def __init__(self, epochs=30, pairs_per_epoch=1000, lr=0.0005, momentum=0.9,
                 weight_decay=0.0002, lr_decay=0.3, lr_decay_interval=10,
                 use_coatt=True, use_contrast=True, strategy="multi",
                 related_count=3, theta=0.7, seed=0):
        self.epochs = epochs
        self.pairs_per_epoch = pairs_per_epoch
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.lr_decay = lr_decay
        self.lr_decay_interval = lr_decay_interval
        self.use_coatt = use_coatt
        self.use_contrast = use_contrast
        self.strategy = strategy
        self.related_count = related_count
        self.theta = theta
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs,
                           pairs_per_epoch=self.pairs_per_epoch,
                           lr=self.lr, momentum=self.momentum,
                           weight_decay=self.weight_decay,
                           lr_decay=self.lr_decay,
                           lr_decay_interval=self.lr_decay_interval,
                           seed=self.seed, use_coatt=self.use_coatt,
                           use_contrast=self.use_contrast)

    def _infer_config(self) -> InferConfig:
        cfg = InferConfig(strategy=self.strategy,
                          related_count=self.related_count,
                          theta=self.theta, seed=self.seed)
        cfg.validate()
        return cfg

    def fit(self, X, y=None):
        """Train on a list of ImageSamples; image-level labels ride along on
        the samples, so y is ignored."""
        samples = _check_samples(X)
        self._infer_config()
        self.params_, self.metrics_ = train(samples, self._train_config())
        self.train_samples_ = samples
        self.n_classes_ = samples[0].labels.num_classes
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise ContractError("estimator is not fitted; call fit() first")

    def predict(self, X) -> list[np.ndarray]:
        """Pseudo segmentation masks for each sample."""
        self._check_fitted()
        samples = _check_samples(X)
        cfg = self._infer_config()
        masks = []
        for s in samples:
            if cfg.strategy == "multi":
                loc = infer_multi(s, self.train_samples_, self.params_, cfg)
            else:
                loc = infer_single(s, self.params_)
            masks.append(to_pseudo_mask(loc, s.labels, cfg.theta,
                                        s.pixels.shape[1:]))
        return masks

    def score(self, X, y=None) -> float:
        """Mean IoU of predicted pseudo masks against ground-truth masks."""
        samples = _check_samples(X, require_masks=True)
        preds = self.predict(samples)
        _, mean = miou(preds, [s.mask for s in samples], self.n_classes_)
        return mean
