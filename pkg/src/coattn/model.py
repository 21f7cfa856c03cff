"""Toy convolutional classifier with pair-attention supervision.

A three-block stride-2 backbone embeds an image into a C×H×W feature map,
a class-aware 1×1 layer turns any feature map into K per-class activation
maps, and global average pooling yields class logits. Three loss terms are
defined over an image pair: the usual per-image classification loss, a
common-semantics loss on the attention summaries (target: label
intersection), and an unshared-semantics loss on the gated own-image
features (target: label difference). The total is their unweighted sum.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .coattention import (AffinityParams, CoAttnOutput, GateParams,
                          domain_key, forward_pair, init_affinity_matrix)
from .errors import DimensionError, ParseError
from .labels import LabelVector
from .tensor import Tensor

CHECKPOINT_MAGIC = b"COATTN1"
DEFAULT_CHANNELS = (16, 32, 32)


def xavier_uniform(shape: tuple, fan_in: int, fan_out: int,
                   rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class ConvBlock:
    kernel: Tensor  # Cout×Cin×3×3
    bias: Tensor    # Cout


@dataclass
class ModelParams:
    """Every trainable tensor of the classifier, plus the attention params."""
    blocks: list[ConvBlock]
    phi_kernel: Tensor  # K×C×1×1 class-aware layer
    phi_bias: Tensor    # K
    affinity: AffinityParams
    gate: GateParams

    @property
    def num_classes(self) -> int:
        return self.phi_kernel.shape[0]

    @property
    def feature_channels(self) -> int:
        return self.phi_kernel.shape[1]

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        named = []
        for i, blk in enumerate(self.blocks):
            named.append((f"backbone.{i}.kernel", blk.kernel))
            named.append((f"backbone.{i}.bias", blk.bias))
        named.append(("phi.kernel", self.phi_kernel))
        named.append(("phi.bias", self.phi_bias))
        for (d1, d2), w in sorted(self.affinity.matrices.items()):
            named.append((f"wp:{d1}|{d2}", w))
        named.append(("gate.w_b", self.gate.w_b))
        return named

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_tensors()]

    def zero_grad(self) -> None:
        for t in self.tensors():
            t.zero_grad()


def init_params(num_classes: int, domains: tuple[str, ...] = ("synthetic",),
                channels: tuple[int, ...] = DEFAULT_CHANNELS,
                in_channels: int = 3, seed: int = 0) -> ModelParams:
    rng = np.random.default_rng(seed)
    blocks = []
    cin = in_channels
    for cout in channels:
        k = xavier_uniform((cout, cin, 3, 3), cin * 9, cout * 9, rng)
        blocks.append(ConvBlock(kernel=Tensor(k, requires_grad=True),
                                bias=Tensor(np.zeros(cout), requires_grad=True)))
        cin = cout
    c = channels[-1]
    phi_k = xavier_uniform((num_classes, c, 1, 1), c, num_classes, rng)

    affinity = AffinityParams()
    keys = sorted({domain_key(a, b) for a in domains for b in domains})
    for d1, d2 in keys:
        affinity.set(d1, d2, init_affinity_matrix(c, rng))
    w_b = xavier_uniform((1, c), c, 1, rng)

    return ModelParams(blocks=blocks,
                       phi_kernel=Tensor(phi_k, requires_grad=True),
                       phi_bias=Tensor(np.zeros(num_classes), requires_grad=True),
                       affinity=affinity,
                       gate=GateParams(Tensor(w_b, requires_grad=True)))


def embed(image: Tensor, params: ModelParams) -> Tensor:
    """Stride-2 conv + ReLU chain; spatial size shrinks by 2 per block."""
    image = image if isinstance(image, Tensor) else Tensor(image)
    factor = 2 ** len(params.blocks)
    _, h0, w0 = image.shape
    if h0 % factor or w0 % factor:
        raise DimensionError(f"embed: input size {h0}×{w0} not divisible by "
                             f"{factor}")
    # center pixel values so first-layer gradients are not all-positive
    x = T.add_constant(image, -0.5)
    for blk in params.blocks:
        x = T.relu(T.conv2d(x, blk.kernel, blk.bias, stride=2, pad=1))
    return x


def class_maps(features: Tensor, params: ModelParams) -> Tensor:
    """K×H×W class-aware activation maps via the 1×1 class layer."""
    return T.conv2d(features, params.phi_kernel, params.phi_bias,
                    stride=1, pad=0)


def class_scores(features: Tensor, params: ModelParams) -> Tensor:
    return T.gap(class_maps(features, params))


def loss_basic(s_maps_m: Tensor, s_maps_n: Tensor,
               l_m: LabelVector, l_n: LabelVector) -> Tensor:
    return T.add(T.sigmoid_ce(T.gap(s_maps_m), l_m.as_float()),
                 T.sigmoid_ce(T.gap(s_maps_n), l_n.as_float()))


def loss_coatt(s_co_m: Tensor, s_co_n: Tensor,
               l_m: LabelVector, l_n: LabelVector) -> Tensor:
    target = l_m.intersect(l_n).as_float()
    return T.add(T.sigmoid_ce(T.gap(s_co_m), target),
                 T.sigmoid_ce(T.gap(s_co_n), target))


def loss_contrast(s_con_m: Tensor, s_con_n: Tensor,
                  l_m: LabelVector, l_n: LabelVector) -> Tensor:
    return T.add(T.sigmoid_ce(T.gap(s_con_m), l_m.subtract(l_n).as_float()),
                 T.sigmoid_ce(T.gap(s_con_n), l_n.subtract(l_m).as_float()))


@dataclass
class PairLossBreakdown:
    basic: Tensor
    coatt: Tensor
    contrast: Tensor
    total: Tensor
    scores_m: Tensor
    scores_n: Tensor
    scores_co_m: Tensor | None
    scores_co_n: Tensor | None
    scores_con_m: Tensor | None
    scores_con_n: Tensor | None
    pair_output: CoAttnOutput | None


def loss_total(image_m: Tensor, image_n: Tensor,
               l_m: LabelVector, l_n: LabelVector,
               domains: tuple[str, str], params: ModelParams,
               use_basic: bool = True, use_coatt: bool = True,
               use_contrast: bool = True) -> PairLossBreakdown:
    """All enabled loss terms over one image pair; total is their unweighted
    sum. The pair-attention branch is skipped entirely when neither attention
    term is enabled, so a basic-only run never touches it."""
    f_m = embed(image_m, params)
    f_n = embed(image_n, params)
    s_m = class_maps(f_m, params)
    s_n = class_maps(f_n, params)
    basic = loss_basic(s_m, s_n, l_m, l_n)

    zero = Tensor(0.0)
    pair = None
    coatt = contrast = zero
    s_co_m = s_co_n = s_con_m = s_con_n = None
    if use_coatt or use_contrast:
        pair = forward_pair(f_m, f_n, domains, params.affinity, params.gate)
        s_co_m = class_maps(pair.coatt_m, params)
        s_co_n = class_maps(pair.coatt_n, params)
        coatt = loss_coatt(s_co_m, s_co_n, l_m, l_n)
        if use_contrast:
            s_con_m = class_maps(pair.contrast_m, params)
            s_con_n = class_maps(pair.contrast_n, params)
            contrast = loss_contrast(s_con_m, s_con_n, l_m, l_n)

    terms = []
    if use_basic:
        terms.append(basic)
    if use_coatt:
        terms.append(coatt)
    if use_contrast:
        terms.append(contrast)
    total = zero
    if terms:
        total = terms[0]
        for t in terms[1:]:
            total = T.add(total, t)

    return PairLossBreakdown(
        basic=basic, coatt=coatt, contrast=contrast, total=total,
        scores_m=T.gap(s_m), scores_n=T.gap(s_n),
        scores_co_m=None if s_co_m is None else T.gap(s_co_m),
        scores_co_n=None if s_co_n is None else T.gap(s_co_n),
        scores_con_m=None if s_con_m is None else T.gap(s_con_m),
        scores_con_n=None if s_con_n is None else T.gap(s_con_n),
        pair_output=pair)


# ---------------------------------------------------------------------------
# checkpoints: magic, then (u32 name length, name bytes, tensor) records
# ---------------------------------------------------------------------------

def save_named_tensors(path, named: list[tuple[str, np.ndarray]]) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        for name, arr in named:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            T.write_array(fh, np.asarray(arr, dtype=np.float64))


def load_named_tensors(path) -> dict[str, np.ndarray]:
    named: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ParseError(f"bad checkpoint magic {magic!r}")
        while True:
            head = fh.read(4)
            if not head:
                break
            if len(head) != 4:
                raise ParseError("checkpoint record header truncated")
            nlen, = struct.unpack("<I", head)
            raw = fh.read(nlen)
            if len(raw) != nlen:
                raise ParseError("checkpoint record name truncated")
            named[raw.decode("utf-8")] = T.read_array(fh)
    return named


def save_params(path, params: ModelParams,
                extra: list[tuple[str, np.ndarray]] | None = None) -> None:
    named = [(n, t.data) for n, t in params.named_tensors()]
    if extra:
        named.extend(extra)
    save_named_tensors(path, named)


def load_params(path) -> tuple[ModelParams, dict[str, np.ndarray]]:
    """Rebuild ModelParams from a checkpoint; returns leftover records too."""
    named = load_named_tensors(path)
    blocks = []
    i = 0
    while f"backbone.{i}.kernel" in named:
        blocks.append(ConvBlock(
            kernel=Tensor(named.pop(f"backbone.{i}.kernel"), requires_grad=True),
            bias=Tensor(named.pop(f"backbone.{i}.bias"), requires_grad=True)))
        i += 1
    if not blocks or "phi.kernel" not in named:
        raise ParseError("checkpoint missing backbone or class layer")
    affinity = AffinityParams()
    for name in sorted(n for n in named if n.startswith("wp:")):
        d1, d2 = name[3:].split("|", 1)
        affinity.set(d1, d2, Tensor(named.pop(name), requires_grad=True))
    if not affinity.matrices or "gate.w_b" not in named:
        raise ParseError("checkpoint missing attention parameters")
    params = ModelParams(
        blocks=blocks,
        phi_kernel=Tensor(named.pop("phi.kernel"), requires_grad=True),
        phi_bias=Tensor(named.pop("phi.bias"), requires_grad=True),
        affinity=affinity,
        gate=GateParams(Tensor(named.pop("gate.w_b"), requires_grad=True)))
    return params, named
