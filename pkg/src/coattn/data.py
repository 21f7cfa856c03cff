"""Synthetic multi-label shape images with pixel ground truth.

Each class is a distinct shape in a distinct color (disk, square, triangle,
bar, ring) drawn on a noisy gray background. Instances never overlap, so the
per-pixel mask is unambiguous; image-level labels are derived from the mask.
The on-disk layout is open: binary PPM images, PGM class-index masks, a
JSON-lines manifest and a classes.json name table.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, ParseError, SamplingError
from .labels import LabelVector
from .pnm import read_pgm, read_ppm, write_pgm, write_ppm

IGNORE_INDEX = 255

# class index (1-based) -> (shape name, RGB color in [0,1])
CLASS_TABLE = [
    ("disk", (0.85, 0.15, 0.15)),
    ("square", (0.15, 0.80, 0.20)),
    ("triangle", (0.20, 0.30, 0.90)),
    ("bar", (0.90, 0.85, 0.20)),
    ("ring", (0.85, 0.20, 0.85)),
]


@dataclass
class DatasetSpec:
    num_classes: int = 5
    image_size: int = 32
    min_instances: int = 1
    max_instances: int = 3
    splits: dict = field(default_factory=lambda: {"train": 500, "test": 100})
    seed: int = 0
    domain: str = "synthetic"
    noise_amplitude: float = 0.08

    def validate(self) -> None:
        if not 2 <= self.num_classes <= len(CLASS_TABLE):
            raise ConfigError(f"num_classes must be in 2..{len(CLASS_TABLE)}, "
                              f"got {self.num_classes}")
        if self.image_size % 8:
            raise ConfigError(f"image_size must be divisible by 8, got "
                              f"{self.image_size}")
        if not 1 <= self.min_instances <= self.max_instances:
            raise ConfigError("instance count range invalid")
        if not 0 <= self.noise_amplitude < 0.5:
            raise ConfigError("noise_amplitude must be in [0, 0.5)")

    @classmethod
    def from_json(cls, path) -> "DatasetSpec":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read dataset spec {path}: {e}") from e
        known = {f for f in cls.__dataclass_fields__}
        spec = cls(**{k: v for k, v in raw.items() if k in known})
        spec.validate()
        return spec

    def class_names(self) -> dict[int, str]:
        return {k + 1: CLASS_TABLE[k][0] for k in range(self.num_classes)}


@dataclass
class ImageSample:
    id: str
    pixels: np.ndarray           # 3×H×W float64 in [0,1]
    labels: LabelVector
    mask: np.ndarray | None      # H×W uint8 class index, 0 bg, 255 ignore
    domain: str = "synthetic"


def _shape_mask(shape: str, size: int, cy: int, cx: int, r: int) -> np.ndarray:
    y, x = np.ogrid[:size, :size]
    dy, dx = y - cy, x - cx
    if shape == "disk":
        return dy * dy + dx * dx <= r * r
    if shape == "square":
        return (np.abs(dy) <= r) & (np.abs(dx) <= r)
    if shape == "triangle":
        # upward-pointing: width grows linearly from apex
        return (dy >= -r) & (dy <= r) & (np.abs(dx) * 2 <= dy + r)
    if shape == "bar":
        return (np.abs(dy) <= max(1, r // 3)) & (np.abs(dx) <= r)
    if shape == "ring":
        d2 = dy * dy + dx * dx
        inner = max(1, r - 2)
        return (d2 <= r * r) & (d2 >= inner * inner)
    raise ConfigError(f"unknown shape {shape!r}")


def _render_sample(spec: DatasetSpec, sample_id: str,
                   rng: np.random.Generator) -> ImageSample:
    size = spec.image_size
    base = 0.5 + rng.uniform(-spec.noise_amplitude, spec.noise_amplitude,
                             size=(size, size))
    pixels = np.repeat(base[None], 3, axis=0)
    mask = np.zeros((size, size), dtype=np.uint8)

    lo, hi = spec.min_instances, min(spec.max_instances, spec.num_classes)
    counts = np.arange(lo, hi + 1)
    # bias toward 2-label images so pairs expose both shared and unshared classes
    weights = np.where(counts == 2, 2.5, 1.0)
    n_labels = int(rng.choice(counts, p=weights / weights.sum()))
    classes = rng.choice(np.arange(1, spec.num_classes + 1), size=n_labels,
                         replace=False)

    occupied = np.zeros((size, size), dtype=bool)
    for k in classes:
        shape_name, color = CLASS_TABLE[int(k) - 1]
        placed = False
        for _ in range(60):
            r_lo = max(4, size // 6)
            r_hi = max(r_lo + 1, (9 * size) // 32)
            r = int(rng.integers(r_lo, r_hi + 1))
            cy = int(rng.integers(r + 1, size - r - 1))
            cx = int(rng.integers(r + 1, size - r - 1))
            m = _shape_mask(shape_name, size, cy, cx, r)
            if not (m & occupied).any():
                placed = True
                break
        if not placed:
            continue  # image keeps fewer labels; labels derive from the mask
        occupied |= m
        shade = 1.0 + rng.uniform(-0.1, 0.1)
        for ch in range(3):
            pixels[ch][m] = np.clip(color[ch] * shade, 0.0, 1.0)
        mask[m] = k

    # store exactly what the 8-bit image file will hold
    quantized = np.clip(np.rint(pixels * 255.0), 0, 255).astype(np.uint8)
    labels = _labels_from_mask(mask, spec.num_classes)
    return ImageSample(id=sample_id, pixels=quantized.astype(np.float64) / 255.0,
                       labels=labels, mask=mask, domain=spec.domain)


def _labels_from_mask(mask: np.ndarray, num_classes: int) -> LabelVector:
    present = np.unique(mask)
    indices = [int(v) for v in present if 1 <= v <= num_classes]
    return LabelVector.from_indices(indices, num_classes)


def generate(spec: DatasetSpec) -> dict[str, list[ImageSample]]:
    """Seeded, reproducible generation of all splits."""
    spec.validate()
    out: dict[str, list[ImageSample]] = {}
    for split_idx, (split, count) in enumerate(sorted(spec.splits.items())):
        samples = []
        for i in range(count):
            rng = np.random.default_rng([spec.seed, split_idx, i])
            sample = _render_sample(spec, f"{split}_{i:05d}", rng)
            if not sample.labels.any():
                raise SamplingError(f"generated empty sample {sample.id}")
            samples.append(sample)
        out[split] = samples
    return out


# ---------------------------------------------------------------------------
# pair and reference sampling
# ---------------------------------------------------------------------------

def sample_pair(samples: list[ImageSample], rng: np.random.Generator,
                max_attempts: int = 10000) -> tuple[ImageSample, ImageSample]:
    """Uniform pair with at least one common class; never a self-pair."""
    n = len(samples)
    if n < 2:
        raise SamplingError("need at least two samples to form a pair")
    for _ in range(max_attempts):
        i = int(rng.integers(n))
        j = int(rng.integers(n))
        if i == j:
            continue
        if samples[i].labels.has_common(samples[j].labels):
            return samples[i], samples[j]
    raise SamplingError(f"no label-sharing pair found in {max_attempts} attempts")


def related_images(samples: list[ImageSample], query_id: str, class_index: int,
                   count: int, rng: np.random.Generator) -> list[ImageSample]:
    """Up to `count` distinct non-query samples labeled with `class_index`.

    The query may come from outside `samples` (held-out inference); when it is
    present, its labels must actually include `class_index`.
    """
    query = next((s for s in samples if s.id == query_id), None)
    if query is not None and class_index not in query.labels.to_indices():
        raise ContractError(f"class {class_index} not labeled on {query_id!r}")
    eligible = [s for s in samples
                if s.id != query_id and class_index in s.labels.to_indices()]
    if count <= 0 or not eligible:
        return []
    if count >= len(eligible):
        return list(eligible)
    picks = rng.choice(len(eligible), size=count, replace=False)
    return [eligible[int(i)] for i in picks]


# ---------------------------------------------------------------------------
# on-disk format
# ---------------------------------------------------------------------------

def write_dataset(samples: list[ImageSample], directory,
                  class_names: dict[int, str]) -> None:
    directory = os.fspath(directory)
    os.makedirs(os.path.join(directory, "images"), exist_ok=True)
    os.makedirs(os.path.join(directory, "masks"), exist_ok=True)
    with open(os.path.join(directory, "classes.json"), "w") as fh:
        json.dump({str(k): v for k, v in sorted(class_names.items())}, fh,
                  indent=2)
        fh.write("\n")
    with open(os.path.join(directory, "manifest.jsonl"), "w") as fh:
        for s in samples:
            img_rel = f"images/{s.id}.ppm"
            pix = np.clip(np.rint(s.pixels * 255.0), 0, 255).astype(np.uint8)
            write_ppm(os.path.join(directory, img_rel),
                      pix.transpose(1, 2, 0))
            mask_rel = None
            if s.mask is not None:
                mask_rel = f"masks/{s.id}.pgm"
                write_pgm(os.path.join(directory, mask_rel), s.mask)
            record = {"id": s.id, "image": img_rel, "mask": mask_rel,
                      "labels": s.labels.to_indices(), "domain": s.domain}
            fh.write(json.dumps(record) + "\n")


def read_dataset(directory) -> tuple[list[ImageSample], dict[int, str]]:
    directory = os.fspath(directory)
    classes_path = os.path.join(directory, "classes.json")
    try:
        with open(classes_path) as fh:
            class_names = {int(k): v for k, v in json.load(fh).items()}
    except (OSError, json.JSONDecodeError, ValueError) as e:
        raise ParseError(f"cannot read {classes_path}: {e}") from e
    num_classes = max(class_names)

    samples = []
    manifest = os.path.join(directory, "manifest.jsonl")
    with open(manifest) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                sample_id = record["id"]
                labels = LabelVector.from_indices(record["labels"], num_classes)
                domain = record["domain"]
                image_rel = record["image"]
                mask_rel = record["mask"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"{manifest}:{lineno}: malformed record "
                                 f"({e})") from e
            pixels = read_ppm(os.path.join(directory, image_rel))
            pixels = pixels.transpose(2, 0, 1).astype(np.float64) / 255.0
            mask = None
            if mask_rel is not None:
                mask = read_pgm(os.path.join(directory, mask_rel))
                derived = _labels_from_mask(mask, num_classes)
                if derived != labels:
                    raise ParseError(f"{manifest}:{lineno}: labels "
                                     f"{labels.to_indices()} disagree with "
                                     f"mask classes {derived.to_indices()}")
            samples.append(ImageSample(id=sample_id, pixels=pixels,
                                       labels=labels, mask=mask, domain=domain))
    return samples, class_names
