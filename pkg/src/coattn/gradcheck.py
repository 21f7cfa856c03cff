"""Finite-difference verification suite for every differentiable operation
and for the full pair-loss graph. Shared by the test suite and the CLI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .labels import LabelVector
from .model import init_params, loss_total
from .coattention import forward_pair
from .tensor import Tensor, backward, finite_diff_grad, max_rel_error

TOLERANCE = 1e-4
EPS = 1e-5


def scalarize(t: Tensor, weights: np.ndarray) -> Tensor:
    """Fixed-weight linear readout to a scalar, built from existing ops."""
    size = t.data.size
    flat = T.reshape(t, (1, size))
    out = T.matmul(flat, Tensor(weights.reshape(size, 1)))
    return T.reshape(out, ())


@dataclass
class CheckResult:
    name: str
    max_rel_err: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < TOLERANCE


def _check(name: str, params: dict[str, np.ndarray], build) -> CheckResult:
    """Compare backward gradients with central differences for each input."""
    tensors = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
    loss = build(tensors)
    backward(loss)
    worst = 0.0
    for key, arr in params.items():
        analytic = tensors[key].grad
        if analytic is None:
            analytic = np.zeros_like(arr)

        def f(_x, key=key):
            fresh = {k: Tensor(v) for k, v in params.items()}
            return build(fresh).item()

        numeric = finite_diff_grad(f, arr, eps=EPS)
        worst = max(worst, max_rel_error(analytic, numeric))
    return CheckResult(name=name, max_rel_err=worst)


def run_suite(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []

    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    w1 = rng.standard_normal(6)
    results.append(_check("matmul", {"a": a, "b": b},
                          lambda t: scalarize(T.matmul(t["a"], t["b"]), w1)))

    x = rng.standard_normal((4, 3))
    w2 = rng.standard_normal(12)
    results.append(_check("softmax_columns", {"x": x},
                          lambda t: scalarize(T.softmax_columns(t["x"]), w2)))

    x = rng.standard_normal((2, 3))
    w3 = rng.standard_normal(6)
    results.append(_check("sigmoid", {"x": x},
                          lambda t: scalarize(T.sigmoid(t["x"]), w3)))

    # keep inputs away from the ReLU kink, where FD is undefined
    x = rng.standard_normal((2, 3))
    x = np.where(np.abs(x) < 0.05, 0.3, x)
    w4 = rng.standard_normal(6)
    results.append(_check("relu", {"x": x},
                          lambda t: scalarize(T.relu(t["x"]), w4)))

    s = rng.standard_normal((3, 2, 2))
    w5 = rng.standard_normal(3)
    results.append(_check("gap", {"s": s},
                          lambda t: scalarize(T.gap(t["s"]), w5)))

    f = rng.standard_normal((3, 2, 2))
    att = rng.uniform(0.0, 1.0, (2, 2))
    w6 = rng.standard_normal(12)
    results.append(_check(
        "elementwise_mul_broadcast", {"f": f, "a": att},
        lambda t: scalarize(T.elementwise_mul_broadcast(t["f"], t["a"]), w6)))

    x = rng.standard_normal((2, 4, 4))
    kern = rng.standard_normal((3, 2, 3, 3)) * 0.5
    bias = rng.standard_normal(3)
    w7 = rng.standard_normal(3 * 4 * 4)
    results.append(_check(
        "conv2d", {"x": x, "k": kern, "b": bias},
        lambda t: scalarize(T.conv2d(t["x"], t["k"], t["b"], stride=1, pad=1),
                            w7)))
    w8 = rng.standard_normal(3 * 2 * 2)
    results.append(_check(
        "conv2d_stride2", {"x": x, "k": kern, "b": bias},
        lambda t: scalarize(T.conv2d(t["x"], t["k"], t["b"], stride=2, pad=1),
                            w8)))

    scores = rng.standard_normal(5)
    target = rng.integers(0, 2, 5).astype(np.float64)
    results.append(_check("sigmoid_ce", {"s": scores},
                          lambda t: T.sigmoid_ce(t["s"], target)))

    # composite pair-attention graph
    c, h, w = 3, 2, 2
    f_m = rng.standard_normal((c, h, w))
    f_n = rng.standard_normal((c, h, w))
    w_p = np.eye(c) + 0.1 * rng.standard_normal((c, c))
    w_b = 0.5 * rng.standard_normal((1, c))
    wout_a = rng.standard_normal(c * h * w)
    wout_b = rng.standard_normal(c * h * w)

    def build_pair(t):
        from .coattention import AffinityParams, GateParams
        ap = AffinityParams()
        ap.matrices[("d", "d")] = t["w_p"]
        gp = GateParams(t["w_b"])
        out = forward_pair(t["f_m"], t["f_n"], ("d", "d"), ap, gp)
        return T.add(scalarize(out.coatt_m, wout_a),
                     scalarize(out.contrast_n, wout_b))

    results.append(_check("forward_pair",
                          {"f_m": f_m, "f_n": f_n, "w_p": w_p, "w_b": w_b},
                          build_pair))

    results.append(_check_full_graph(seed, rng))
    return results


def _check_full_graph(seed: int, rng: np.random.Generator) -> CheckResult:
    """Full pair loss on 8×8 images with a reduced C=8 backbone."""
    params = init_params(num_classes=4, channels=(8, 8, 8), seed=seed)
    img_m = rng.uniform(0.0, 1.0, (3, 8, 8))
    img_n = rng.uniform(0.0, 1.0, (3, 8, 8))
    l_m = LabelVector([1, 0, 1, 0])
    l_n = LabelVector([1, 1, 0, 0])
    named = params.named_tensors()
    arrays = {name: t.data for name, t in named}  # shared: FD perturbs in place

    def value() -> Tensor:
        return loss_total(Tensor(img_m), Tensor(img_n), l_m, l_n,
                          ("synthetic", "synthetic"), params).total

    params.zero_grad()
    backward(value())
    grads = {name: (t.grad.copy() if t.grad is not None
                    else np.zeros_like(t.data)) for name, t in named}

    worst = 0.0
    for name, arr in arrays.items():
        numeric = finite_diff_grad(lambda _x: value().item(), arr, eps=EPS)
        worst = max(worst, max_rel_error(grads[name], numeric))
    return CheckResult(name="pair_loss_full_graph", max_rel_err=worst)
