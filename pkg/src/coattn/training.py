"""Pair-based SGD training loop: deterministic, resumable, toggleable terms.

Pairs are sampled fresh each epoch from a per-epoch RNG derived from
(seed, epoch), so a run resumed from a checkpoint reproduces the remaining
epochs bit-identically. Hyperparameter defaults are desk scale; the source
settings they rescale (lr 0.001 decayed 0.1 / 6 epochs, batch 5, weight
decay 2e-4, momentum 0.9) target a VGG-16 backbone on full-size data.
"""

from __future__ import annotations

import copy
import csv
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .data import ImageSample, sample_pair
from .errors import ConfigError, DivergenceError
from .evaluation import multilabel_f1
from .model import (ModelParams, class_scores, embed, init_params, load_params,
                    loss_total, save_params)
from .tensor import Tensor, backward

ARM_TOGGLES = {
    "basic": (True, False, False),
    "basic_coatt": (True, True, False),
    "full": (True, True, True),
}


@dataclass
class TrainConfig:
    epochs: int = 30
    pairs_per_epoch: int = 1000
    lr: float = 0.0005
    momentum: float = 0.9
    weight_decay: float = 0.0002
    lr_decay: float = 0.3
    lr_decay_interval: int = 10
    seed: int = 0
    use_basic: bool = True
    use_coatt: bool = True
    use_contrast: bool = True
    checkpoint_interval: int = 10
    domains: tuple = ("synthetic",)

    def validate(self) -> None:
        if self.lr <= 0 or self.lr_decay <= 0 or self.lr_decay_interval <= 0:
            raise ConfigError("learning rate settings must be positive")
        if self.epochs < 0 or self.pairs_per_epoch <= 0:
            raise ConfigError("epoch settings must be positive")

    def with_arm(self, arm: str) -> "TrainConfig":
        if arm not in ARM_TOGGLES:
            raise ConfigError(f"unknown loss arm {arm!r}; "
                              f"choose from {sorted(ARM_TOGGLES)}")
        b, c, x = ARM_TOGGLES[arm]
        cfg = copy.copy(self)
        cfg.use_basic, cfg.use_coatt, cfg.use_contrast = b, c, x
        return cfg


def parse_config(path) -> TrainConfig:
    """Flat `key = value` file; unknown keys are rejected."""
    known = {f.name: f.type for f in fields(TrainConfig)}
    cfg = TrainConfig()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            current = getattr(cfg, key)
            if isinstance(current, bool):
                if value.lower() not in ("true", "false"):
                    raise ConfigError(f"{path}:{lineno}: {key} must be "
                                      f"true/false")
                setattr(cfg, key, value.lower() == "true")
            elif isinstance(current, int):
                setattr(cfg, key, int(value))
            elif isinstance(current, float):
                setattr(cfg, key, float(value))
            elif isinstance(current, tuple):
                setattr(cfg, key, tuple(v.strip() for v in value.split(",")
                                        if v.strip()))
            else:
                setattr(cfg, key, value)
    cfg.validate()
    return cfg


def sgd_step(named_params: list[tuple[str, Tensor]],
             velocities: dict[str, np.ndarray],
             lr: float, momentum: float, weight_decay: float) -> None:
    """v = momentum*v + grad + wd*param; param -= lr*v."""
    for name, p in named_params:
        if p.grad is None:
            continue
        if p.grad.shape != p.data.shape:
            raise ConfigError(f"gradient shape {p.grad.shape} != param "
                              f"{p.data.shape} for {name}")
        v = velocities[name]
        v *= momentum
        v += p.grad + weight_decay * p.data
        p.data -= lr * v


@dataclass
class EpochMetrics:
    epoch: int
    loss_basic: float
    loss_coatt: float
    loss_contrast: float
    loss_total: float
    f1: float


METRICS_HEADER = ["epoch", "loss_basic", "loss_coatt", "loss_contrast",
                  "loss_total", "f1"]


def write_metrics(path, rows: list[EpochMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for r in rows:
            writer.writerow([r.epoch, f"{r.loss_basic:.6f}",
                             f"{r.loss_coatt:.6f}", f"{r.loss_contrast:.6f}",
                             f"{r.loss_total:.6f}", f"{r.f1:.6f}"])


def _train_f1(samples: list[ImageSample], params: ModelParams,
              limit: int = 200) -> float:
    subset = samples[:limit]
    scores = [class_scores(embed(Tensor(s.pixels), params), params).data
              for s in subset]
    labels = [s.labels for s in subset]
    return multilabel_f1(scores, labels)


def _epoch_lr(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr * cfg.lr_decay ** (epoch // cfg.lr_decay_interval)


def _save_checkpoint(path, params: ModelParams,
                     velocities: dict[str, np.ndarray],
                     epochs_done: int) -> None:
    extra = [(f"opt.{name}", v) for name, v in sorted(velocities.items())]
    extra.append(("meta.epochs_done", np.asarray(float(epochs_done))))
    save_params(path, params, extra=extra)


def load_checkpoint(path) -> tuple[ModelParams, dict[str, np.ndarray], int]:
    params, extra = load_params(path)
    velocities = {name[4:]: np.array(arr) for name, arr in extra.items()
                  if name.startswith("opt.")}
    for name, t in params.named_tensors():
        velocities.setdefault(name, np.zeros_like(t.data))
    epochs_done = int(extra.get("meta.epochs_done", np.asarray(0.0)))
    return params, velocities, epochs_done


def train(samples: list[ImageSample], cfg: TrainConfig,
          out_dir=None, resume_from=None,
          params: ModelParams | None = None
          ) -> tuple[ModelParams, list[EpochMetrics]]:
    """Optimize the pair loss; returns final parameters and per-epoch metrics.

    With `out_dir` set, writes `checkpoint.bin` and `metrics.csv` there. A
    non-finite loss aborts with the last epoch-boundary checkpoint on disk.
    """
    cfg.validate()
    num_classes = samples[0].labels.num_classes
    start_epoch = 0
    if resume_from is not None:
        params, velocities, start_epoch = load_checkpoint(resume_from)
    else:
        if params is None:
            params = init_params(num_classes, domains=tuple(cfg.domains),
                                 seed=cfg.seed)
        velocities = {name: np.zeros_like(t.data)
                      for name, t in params.named_tensors()}

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    ckpt_path = None if out_dir is None else os.path.join(out_dir,
                                                          "checkpoint.bin")
    metrics_path = None if out_dir is None else os.path.join(out_dir,
                                                             "metrics.csv")
    named = params.named_tensors()
    any_term = cfg.use_basic or cfg.use_coatt or cfg.use_contrast
    rows: list[EpochMetrics] = []

    for epoch in range(start_epoch, cfg.epochs):
        lr = _epoch_lr(cfg, epoch)
        rng = np.random.default_rng([cfg.seed, 1000 + epoch])
        sums = np.zeros(4)
        for _ in range(cfg.pairs_per_epoch):
            m, n = sample_pair(samples, rng)
            bd = loss_total(Tensor(m.pixels), Tensor(n.pixels),
                            m.labels, n.labels, (m.domain, n.domain), params,
                            use_basic=cfg.use_basic, use_coatt=cfg.use_coatt,
                            use_contrast=cfg.use_contrast)
            vals = (bd.basic.item(), bd.coatt.item(), bd.contrast.item(),
                    bd.total.item())
            if not all(np.isfinite(v) for v in vals):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}; last good checkpoint: "
                    f"{ckpt_path}")
            sums += vals
            if any_term:
                backward(bd.total)
                sgd_step(named, velocities, lr, cfg.momentum,
                         cfg.weight_decay)
                params.zero_grad()
        means = sums / cfg.pairs_per_epoch
        rows.append(EpochMetrics(epoch=epoch, loss_basic=means[0],
                                 loss_coatt=means[1], loss_contrast=means[2],
                                 loss_total=means[3],
                                 f1=_train_f1(samples, params)))
        if out_dir is not None:
            write_metrics(metrics_path, rows)
            if ((epoch + 1) % cfg.checkpoint_interval == 0
                    or epoch + 1 == cfg.epochs):
                _save_checkpoint(ckpt_path, params, velocities, epoch + 1)
    if out_dir is not None and cfg.epochs == start_epoch:
        _save_checkpoint(ckpt_path, params, velocities, start_epoch)
    return params, rows


def ablation_suite(samples: list[ImageSample], cfg: TrainConfig, out_root
                   ) -> dict[str, tuple[ModelParams, list[EpochMetrics]]]:
    """Train the three loss arms with the same seed."""
    results = {}
    for arm in ("basic", "basic_coatt", "full"):
        arm_dir = os.path.join(os.fspath(out_root), arm)
        results[arm] = train(samples, cfg.with_arm(arm), out_dir=arm_dir)
    return results
