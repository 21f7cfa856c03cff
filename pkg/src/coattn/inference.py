"""Localization-map inference and pseudo-mask generation.

Two strategies: a plain feed-forward pass whose class-aware activation maps
are used directly, and a multi-round variant that, per labeled class, averages
the co-attentive activation maps computed against a few related training
images. Maps are ReLU'd and max-normalized per class, upsampled bilinearly to
image resolution and converted to a class-index mask by thresholded argmax.
The contrastive branch is never used at inference time: it gates an image's
own features, so it adds no cross-image information.
"""

from __future__ import annotations

import os
import zlib
from dataclasses import dataclass, field

import numpy as np

from .coattention import forward_pair
from .data import ImageSample, related_images
from .errors import ConfigError, ContractError
from .labels import LabelVector
from .model import ModelParams, class_maps, embed
from .pnm import write_pgm
from .tensor import Tensor


@dataclass
class InferConfig:
    strategy: str = "multi"      # "single" | "multi"
    related_count: int = 3
    theta: float = 0.7           # background threshold on normalized maps
    seed: int = 0

    def validate(self) -> None:
        if self.strategy not in ("single", "multi"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.related_count < 0:
            raise ConfigError("related_count must be >= 0")
        if not 0.0 <= self.theta < 1.0:
            raise ConfigError(f"theta must be in [0,1), got {self.theta}")


@dataclass
class LocalizationMap:
    maps: np.ndarray             # K×H×W, each class channel in [0,1]
    strategy: str
    related_ids: dict[int, list[str]] = field(default_factory=dict)


def image_rng(seed: int, image_id: str) -> np.random.Generator:
    """Per-image RNG derived from (seed, id): parallel order cannot matter."""
    return np.random.default_rng([seed, zlib.crc32(image_id.encode("utf-8"))])


def _normalize(raw: np.ndarray, labels: LabelVector | None) -> np.ndarray:
    """ReLU then per-class max normalization; unlabeled classes zeroed."""
    maps = np.maximum(raw, 0.0)
    if labels is not None:
        keep = labels.bits.astype(bool)
        maps[~keep] = 0.0
    for k in range(maps.shape[0]):
        peak = maps[k].max()
        if peak > 0:
            maps[k] /= peak
    return maps


def _raw_class_maps(pixels: np.ndarray, params: ModelParams) -> np.ndarray:
    return class_maps(embed(Tensor(pixels), params), params).data


def infer_single(sample: ImageSample, params: ModelParams,
                 use_labels: bool = True) -> LocalizationMap:
    """One feed-forward pass; the class-aware activation maps are the result."""
    labels = sample.labels if use_labels else None
    raw = _raw_class_maps(sample.pixels, params)
    return LocalizationMap(maps=_normalize(raw, labels), strategy="single")


def infer_multi(sample: ImageSample, dataset: list[ImageSample],
                params: ModelParams, cfg: InferConfig) -> LocalizationMap:
    """Class-wise averaging of co-attentive activation maps over related
    images; classes with no related image fall back to the single-round map."""
    cfg.validate()
    if not sample.labels.any():
        raise ContractError(f"multi-round inference needs labels for "
                            f"{sample.id!r}")
    rng = image_rng(cfg.seed, sample.id)
    f_q = embed(Tensor(sample.pixels), params)
    single_raw = class_maps(f_q, params).data
    raw = np.zeros_like(single_raw)
    related_ids: dict[int, list[str]] = {}

    for k in sample.labels.to_indices():
        refs = related_images(dataset, sample.id, k, cfg.related_count, rng)
        related_ids[k] = [r.id for r in refs]
        if not refs:
            raw[k - 1] = single_raw[k - 1]
            continue
        acc = np.zeros_like(single_raw[k - 1])
        for ref in refs:
            f_r = embed(Tensor(ref.pixels), params)
            pair = forward_pair(f_q, f_r, (sample.domain, ref.domain),
                                params.affinity, params.gate)
            acc += class_maps(pair.coatt_m, params).data[k - 1]
        raw[k - 1] = acc / len(refs)

    return LocalizationMap(maps=_normalize(raw, sample.labels),
                           strategy="multi", related_ids=related_ids)


def bilinear_upsample(maps: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centered bilinear resize of a K×h×w stack."""
    k, h, w = maps.shape
    if (h, w) == (out_h, out_w):
        return maps.copy()
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[None, :, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, None, :]
    top = maps[:, y0][:, :, x0] * (1 - wx) + maps[:, y0][:, :, x1] * wx
    bot = maps[:, y1][:, :, x0] * (1 - wx) + maps[:, y1][:, :, x1] * wx
    return top * (1 - wy) + bot * wy


def to_pseudo_mask(loc: LocalizationMap, labels: LabelVector, theta: float,
                   out_size: tuple[int, int]) -> np.ndarray:
    """Thresholded argmax over labeled classes at image resolution.

    Pixel = class of the largest upsampled activation if it exceeds theta,
    else background 0. Argmax ties resolve to the lowest class index.
    """
    if not 0.0 <= theta < 1.0:
        raise ConfigError(f"theta must be in [0,1), got {theta}")
    up = bilinear_upsample(loc.maps, *out_size)
    keep = labels.bits.astype(bool)
    up[~keep] = -np.inf
    best = up.argmax(axis=0)           # first maximum = lowest class index
    peak = up.max(axis=0)
    mask = np.where(peak > theta, best + 1, 0).astype(np.uint8)
    if not keep.any():
        mask[:] = 0
    return mask


def export_localization_maps(loc: LocalizationMap, labels: LabelVector,
                             sample_id: str, directory) -> list[str]:
    """One 8-bit PGM per labeled class, values scaled to 0..255."""
    os.makedirs(directory, exist_ok=True)
    written = []
    for k in labels.to_indices():
        scaled = np.clip(np.rint(loc.maps[k - 1] * 255.0), 0, 255)
        name = f"{sample_id}_class{k}.pgm"
        write_pgm(os.path.join(directory, name), scaled.astype(np.uint8))
        written.append(name)
    return written
