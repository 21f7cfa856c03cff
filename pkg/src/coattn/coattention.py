"""Pair attention over feature maps.

Given two flattened feature maps F_m, F_n (C×HW), an affinity matrix
P = F_m' W F_n scores every position pair. Column softmax of P and of P'
yields the two attention maps; right-multiplying a feature matrix by its
attention map produces an attention summary that keeps only semantics the
two images share. A learned 1×1 gate turns the summary into a class-agnostic
foreground map whose complement isolates the unshared content of each image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor


def domain_key(d1: str, d2: str) -> tuple[str, str]:
    """Unordered domain pair: (a,b) and (b,a) select the same matrix."""
    return (d1, d2) if d1 <= d2 else (d2, d1)


@dataclass
class AffinityParams:
    """C×C affinity matrices keyed by unordered domain pair."""
    matrices: dict[tuple[str, str], Tensor] = field(default_factory=dict)

    def get(self, d1: str, d2: str) -> Tensor:
        key = domain_key(d1, d2)
        try:
            return self.matrices[key]
        except KeyError:
            raise ConfigError(f"no affinity matrix for domain pair {key}; "
                              f"have {sorted(self.matrices)}") from None

    def set(self, d1: str, d2: str, w: Tensor) -> None:
        if w.data.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionError(f"affinity matrix must be square C×C, got "
                                 f"{w.shape}")
        self.matrices[domain_key(d1, d2)] = w


@dataclass
class GateParams:
    """1×C weight of the class-agnostic gate (a 1×1 convolution)."""
    w_b: Tensor

    def __post_init__(self):
        if self.w_b.data.ndim != 2 or self.w_b.shape[0] != 1:
            raise DimensionError(f"gate weight must be 1×C, got {self.w_b.shape}")


@dataclass
class CoAttnOutput:
    coatt_m: Tensor      # common-semantics features aligned with image m
    coatt_n: Tensor
    contrast_m: Tensor   # unshared-semantics features of image m
    contrast_n: Tensor
    attn_m: Tensor       # HW×HW column-stochastic attention maps
    attn_n: Tensor
    gate_m: Tensor       # H×W class-agnostic common-foreground gates
    gate_n: Tensor


def affinity(f_m: Tensor, f_n: Tensor, w_p: Tensor) -> Tensor:
    """P = F_m' W F_n; P[i,j] scores position i of F_m against j of F_n."""
    if f_m.data.ndim != 2 or f_n.data.ndim != 2:
        raise DimensionError(f"affinity: flattened C×HW maps required, got "
                             f"{f_m.shape} and {f_n.shape}")
    if f_m.shape != f_n.shape:
        raise DimensionError(f"affinity: feature shapes differ, {f_m.shape} "
                             f"vs {f_n.shape}")
    if w_p.shape != (f_m.shape[0], f_m.shape[0]):
        raise DimensionError(f"affinity: W must be {f_m.shape[0]}×"
                             f"{f_m.shape[0]}, got {w_p.shape}")
    return T.matmul(T.transpose(f_m), T.matmul(w_p, f_n))


def coattention_maps(p: Tensor) -> tuple[Tensor, Tensor]:
    """Column softmax of P and of P'; columns hold the attention maps."""
    if p.data.ndim != 2 or p.shape[0] != p.shape[1]:
        raise DimensionError(f"coattention_maps: square matrix required, got "
                             f"{p.shape}")
    return T.softmax_columns(p), T.softmax_columns(T.transpose(p))


def attention_summaries(f_m: Tensor, f_n: Tensor, a_m: Tensor, a_n: Tensor,
                        spatial: tuple[int, int]) -> tuple[Tensor, Tensor]:
    """Summaries F_n·A_n and F_m·A_m, reshaped back to C×H×W.

    Column j of A_n weights F_n positions for query position j of F_m, so the
    first summary is spatially aligned with image m (and vice versa).
    """
    h, w = spatial
    c, hw = f_m.shape
    if hw != h * w:
        raise DimensionError(f"attention_summaries: HW {hw} != {h}×{w}")
    if a_m.shape != (hw, hw) or a_n.shape != (hw, hw):
        raise DimensionError(f"attention_summaries: attention shape "
                             f"{a_m.shape}/{a_n.shape} != ({hw},{hw})")
    sum_m = T.reshape(T.matmul(f_n, a_n), (c, h, w))
    sum_n = T.reshape(T.matmul(f_m, a_m), (c, h, w))
    return sum_m, sum_n


def class_agnostic_gate(f_co: Tensor, gp: GateParams) -> Tensor:
    """sigmoid(W_B · F) per pixel: class-agnostic common-foreground map."""
    if f_co.data.ndim != 3:
        raise DimensionError(f"class_agnostic_gate: C×H×W input required, got "
                             f"{f_co.shape}")
    c, h, w = f_co.shape
    if gp.w_b.shape[1] != c:
        raise DimensionError(f"class_agnostic_gate: gate expects "
                             f"{gp.w_b.shape[1]} channels, features have {c}")
    flat = T.reshape(f_co, (c, h * w))
    logits = T.matmul(gp.w_b, flat)
    return T.reshape(T.sigmoid(logits), (h, w))


def contrastive_attention(b: Tensor) -> Tensor:
    """Complement 1 - B of a gate map; highlights the unshared regions."""
    if np.any(b.data < 0.0) or np.any(b.data > 1.0):
        raise ContractError("contrastive_attention: input outside [0,1]")
    out = Tensor(1.0 - b.data, _parents=(b,), op="complement")

    def _bw():
        if b.requires_grad:
            b._accumulate(-out.grad)
    out._backward = _bw
    return out


def contrastive_features(f: Tensor, a_contrast: Tensor) -> Tensor:
    """Own-image features gated by the contrastive attention map."""
    return T.elementwise_mul_broadcast(f, a_contrast)


def forward_pair(f_m: Tensor, f_n: Tensor, domains: tuple[str, str],
                 affinity_params: AffinityParams,
                 gate_params: GateParams) -> CoAttnOutput:
    """Full pair-attention pass over two C×H×W feature maps.

    The pair is canonicalized to a content-defined orientation before any
    arithmetic, so swapping the arguments performs the bit-identical
    computation and returns exactly mirrored fields.
    """
    if f_m.shape != f_n.shape or f_m.data.ndim != 3:
        raise DimensionError(f"forward_pair: matching C×H×W features required, "
                             f"got {f_m.shape} and {f_n.shape}")
    if f_n.data.tobytes() < f_m.data.tobytes():
        out = forward_pair(f_n, f_m, (domains[1], domains[0]),
                           affinity_params, gate_params)
        return CoAttnOutput(coatt_m=out.coatt_n, coatt_n=out.coatt_m,
                            contrast_m=out.contrast_n, contrast_n=out.contrast_m,
                            attn_m=out.attn_n, attn_n=out.attn_m,
                            gate_m=out.gate_n, gate_n=out.gate_m)
    c, h, w = f_m.shape
    w_p = affinity_params.get(domains[0], domains[1])
    # use the symmetric part only: the pair has no inherent orientation, and
    # a symmetric matrix makes the mirrored computation the same function
    w_sym = T.scale(T.add(w_p, T.transpose(w_p)), 0.5)
    flat_m = T.reshape(f_m, (c, h * w))
    flat_n = T.reshape(f_n, (c, h * w))

    p = affinity(flat_m, flat_n, w_sym)
    a_m, a_n = coattention_maps(p)
    coatt_m, coatt_n = attention_summaries(flat_m, flat_n, a_m, a_n, (h, w))

    gate_m = class_agnostic_gate(coatt_m, gate_params)
    gate_n = class_agnostic_gate(coatt_n, gate_params)
    contrast_m = contrastive_features(f_m, contrastive_attention(gate_m))
    contrast_n = contrastive_features(f_n, contrastive_attention(gate_n))

    return CoAttnOutput(coatt_m=coatt_m, coatt_n=coatt_n,
                        contrast_m=contrast_m, contrast_n=contrast_n,
                        attn_m=a_m, attn_n=a_n,
                        gate_m=gate_m, gate_n=gate_n)


def init_affinity_matrix(c: int, rng: np.random.Generator) -> Tensor:
    # identity plus small noise: starts near plain dot-product similarity
    return Tensor(np.eye(c) + rng.uniform(-0.01, 0.01, size=(c, c)),
                  requires_grad=True)
