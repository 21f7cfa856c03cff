"""Quantitative scoring: mask mIoU, multi-label F1, common-semantics probe."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError
from .labels import LabelVector

IGNORE_INDEX = 255


@dataclass
class ConfusionAccumulator:
    """Per-class intersection/union pixel counts, class 0 = background.

    Accumulators are mergeable, so per-image accumulation order never
    changes the result.
    """
    num_classes: int
    intersection: np.ndarray = field(init=False)
    union: np.ndarray = field(init=False)
    pixels: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.num_classes + 1
        self.intersection = np.zeros(n, dtype=np.int64)
        self.union = np.zeros(n, dtype=np.int64)
        self.pixels = np.zeros(n, dtype=np.int64)

    def add(self, pred: np.ndarray, gt: np.ndarray) -> None:
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise DimensionError(f"mask shapes differ: {pred.shape} vs "
                                 f"{gt.shape}")
        valid = gt != IGNORE_INDEX
        p, g = pred[valid], gt[valid]
        for k in range(self.num_classes + 1):
            pk, gk = p == k, g == k
            self.intersection[k] += int((pk & gk).sum())
            self.union[k] += int((pk | gk).sum())
            self.pixels[k] += int(gk.sum())

    def merge(self, other: "ConfusionAccumulator") -> None:
        if other.num_classes != self.num_classes:
            raise DimensionError("cannot merge accumulators with different K")
        self.intersection += other.intersection
        self.union += other.union
        self.pixels += other.pixels

    def per_class_iou(self) -> dict[int, float]:
        """IoU per class index, omitting classes absent from the union."""
        return {k: self.intersection[k] / self.union[k]
                for k in range(self.num_classes + 1) if self.union[k] > 0}

    def mean_iou(self) -> float:
        per = self.per_class_iou()
        if not per:
            return float("nan")
        return float(np.mean(list(per.values())))


def miou(pred_masks: list[np.ndarray], gt_masks: list[np.ndarray],
         num_classes: int) -> tuple[dict[int, float], float]:
    """Per-class IoU and mean (background included) over a mask collection.

    Classes absent from both prediction and ground truth everywhere are
    excluded from the mean rather than scored 0/0.
    """
    if len(pred_masks) != len(gt_masks):
        raise DimensionError(f"{len(pred_masks)} predictions vs "
                             f"{len(gt_masks)} ground-truth masks")
    acc = ConfusionAccumulator(num_classes)
    for p, g in zip(pred_masks, gt_masks):
        acc.add(p, g)
    return acc.per_class_iou(), acc.mean_iou()


def multilabel_f1(scores: list[np.ndarray], labels: list[LabelVector],
                  threshold: float = 0.0) -> float:
    """Micro-averaged F1 with per-class prediction = score > threshold."""
    tp = fp = fn = 0
    for s, l in zip(scores, labels):
        s = np.asarray(s, dtype=np.float64)
        t = l.bits.astype(bool)
        if s.shape != t.shape:
            raise DimensionError(f"score length {s.shape} vs labels {t.shape}")
        pred = s > threshold
        tp += int((pred & t).sum())
        fp += int((pred & ~t).sum())
        fn += int((~pred & t).sum())
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


def common_semantics_probe(params, sample_m, sample_n,
                           shared_class: int, unshared_class: int) -> bool:
    """True iff both co-attentive score vectors rank the shared class above
    the unshared one."""
    from .model import class_scores
    from .coattention import forward_pair
    from .model import embed
    from .tensor import Tensor

    shared = sample_m.labels.intersect(sample_n.labels).to_indices()
    if shared_class not in shared:
        raise ContractError(f"class {shared_class} is not shared by the pair")
    if unshared_class in shared:
        raise ContractError(f"class {unshared_class} is shared by the pair")

    f_m = embed(Tensor(sample_m.pixels), params)
    f_n = embed(Tensor(sample_n.pixels), params)
    pair = forward_pair(f_m, f_n, (sample_m.domain, sample_n.domain),
                        params.affinity, params.gate)
    ok = True
    for feat in (pair.coatt_m, pair.coatt_n):
        s = class_scores(feat, params).data
        ok = ok and s[shared_class - 1] > s[unshared_class - 1]
    return ok
