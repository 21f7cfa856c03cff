"""Tensor ops against numpy/scipy oracles, backward contracts, serialization."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coattn import tensor as T
from coattn.errors import ContractError, DimensionError, ParseError
from coattn.tensor import Tensor, backward, finite_diff_grad, max_rel_error


def _grad_matches_fd(build, arrays, tol=1e-6):
    """Backward gradients of a scalar graph vs central finite differences."""
    tensors = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
    backward(build(tensors))
    for key, arr in arrays.items():
        analytic = tensors[key].grad
        if analytic is None:
            analytic = np.zeros_like(arr)
        numeric = finite_diff_grad(
            lambda _x: build({k: Tensor(v) for k, v in arrays.items()}).item(),
            arr)
        assert max_rel_error(analytic, numeric) < tol, key


class TestForward:
    def test_add_matches_numpy(self, rng):
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        np.testing.assert_array_equal(T.add(Tensor(a), Tensor(b)).data, a + b)

    def test_add_shape_mismatch(self):
        with pytest.raises(DimensionError):
            T.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))

    def test_add_constant(self, rng):
        a = rng.standard_normal((2, 5))
        np.testing.assert_array_equal(T.add_constant(Tensor(a), -0.5).data,
                                      a - 0.5)

    def test_matmul_matches_numpy(self, rng):
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
        np.testing.assert_allclose(T.matmul(Tensor(a), Tensor(b)).data, a @ b)

    def test_matmul_inner_dim_mismatch(self):
        with pytest.raises(DimensionError):
            T.matmul(Tensor(np.zeros((3, 4))), Tensor(np.zeros((3, 2))))

    def test_matmul_requires_2d(self):
        with pytest.raises(DimensionError):
            T.matmul(Tensor(np.zeros(3)), Tensor(np.zeros((3, 2))))

    def test_transpose(self, rng):
        a = rng.standard_normal((2, 5))
        np.testing.assert_array_equal(T.transpose(Tensor(a)).data, a.T)

    def test_reshape_size_mismatch(self):
        with pytest.raises(DimensionError):
            T.reshape(Tensor(np.zeros((2, 3))), (7,))

    def test_softmax_columns_matches_scipy(self, rng):
        scipy_special = pytest.importorskip("scipy.special")
        x = rng.standard_normal((6, 5)) * 10
        got = T.softmax_columns(Tensor(x)).data
        np.testing.assert_allclose(got, scipy_special.softmax(x, axis=0),
                                   atol=1e-12)

    def test_softmax_columns_extreme_values_stable(self):
        x = np.array([[1000.0, -1000.0], [999.0, -999.0]])
        y = T.softmax_columns(Tensor(x)).data
        assert np.isfinite(y).all()
        np.testing.assert_allclose(y.sum(axis=0), 1.0, atol=1e-12)

    def test_sigmoid_matches_scipy(self, rng):
        scipy_special = pytest.importorskip("scipy.special")
        x = rng.standard_normal(20) * 5
        np.testing.assert_allclose(T.sigmoid(Tensor(x)).data,
                                   scipy_special.expit(x), atol=1e-12)

    def test_sigmoid_extreme_values(self):
        y = T.sigmoid(Tensor(np.array([-1000.0, 0.0, 1000.0]))).data
        np.testing.assert_allclose(y, [0.0, 0.5, 1.0], atol=1e-12)

    def test_relu(self):
        x = np.array([-2.0, 0.0, 3.0])
        np.testing.assert_array_equal(T.relu(Tensor(x)).data, [0.0, 0.0, 3.0])

    def test_gap_is_spatial_mean(self, rng):
        s = rng.standard_normal((4, 3, 5))
        np.testing.assert_allclose(T.gap(Tensor(s)).data, s.mean(axis=(1, 2)))

    def test_mul_broadcast(self, rng):
        f, a = rng.standard_normal((3, 2, 2)), rng.standard_normal((2, 2))
        got = T.elementwise_mul_broadcast(Tensor(f), Tensor(a)).data
        np.testing.assert_array_equal(got, f * a[None])

    def test_conv2d_matches_scipy(self, rng):
        ndimage = pytest.importorskip("scipy.ndimage")
        x = rng.standard_normal((2, 6, 6))
        kern = rng.standard_normal((3, 2, 3, 3))
        got = T.conv2d(Tensor(x), Tensor(kern), stride=1, pad=1).data
        want = np.zeros((3, 6, 6))
        for o in range(3):
            for c in range(2):
                want[o] += ndimage.correlate(x[c], kern[o, c], mode="constant")
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_conv2d_stride_subsamples(self, rng):
        x = rng.standard_normal((1, 6, 6))
        kern = rng.standard_normal((2, 1, 3, 3))
        full = T.conv2d(Tensor(x), Tensor(kern), stride=1, pad=1).data
        strided = T.conv2d(Tensor(x), Tensor(kern), stride=2, pad=1).data
        np.testing.assert_allclose(strided, full[:, ::2, ::2])

    def test_conv2d_bias(self, rng):
        x = rng.standard_normal((1, 4, 4))
        kern = rng.standard_normal((2, 1, 1, 1))
        bias = np.array([1.0, -2.0])
        without = T.conv2d(Tensor(x), Tensor(kern)).data
        with_b = T.conv2d(Tensor(x), Tensor(kern), Tensor(bias)).data
        np.testing.assert_allclose(with_b, without + bias[:, None, None])

    def test_conv2d_rejects_even_kernel(self):
        with pytest.raises(DimensionError):
            T.conv2d(Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 1, 2, 2))))

    def test_conv2d_rejects_channel_mismatch(self):
        with pytest.raises(DimensionError):
            T.conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))

    def test_sigmoid_ce_zero_logits_is_log_two(self):
        loss = T.sigmoid_ce(Tensor(np.zeros(4)), np.array([1.0, 0, 1, 0]))
        assert loss.item() == pytest.approx(np.log(2.0), abs=1e-12)

    def test_sigmoid_ce_confident_correct_is_small(self):
        s = np.array([50.0, -50.0])
        loss = T.sigmoid_ce(Tensor(s), np.array([1.0, 0.0]))
        assert loss.item() < 1e-20

    def test_sigmoid_ce_matches_direct_formula(self, rng):
        s = rng.standard_normal(6)
        t = rng.integers(0, 2, 6).astype(float)
        direct = -(t * np.log(1 / (1 + np.exp(-s)))
                   + (1 - t) * np.log(1 - 1 / (1 + np.exp(-s)))).mean()
        assert T.sigmoid_ce(Tensor(s), t).item() == pytest.approx(direct)


class TestBackward:
    def test_scalar_required(self):
        with pytest.raises(ContractError):
            backward(Tensor(np.zeros(3), requires_grad=True))

    def test_double_backward_rejected(self):
        x = Tensor(np.array(2.0), requires_grad=True)
        y = T.scale(x, 3.0)
        backward(y)
        with pytest.raises(ContractError):
            backward(y)

    def test_item_on_non_scalar(self):
        with pytest.raises(ContractError):
            Tensor(np.zeros(2)).item()

    def test_gradient_accumulates_over_fanout(self):
        x = Tensor(np.array([[2.0]]), requires_grad=True)
        y = T.reshape(T.add(x, x), ())
        backward(y)
        np.testing.assert_array_equal(x.grad, [[2.0]])

    def test_no_grad_without_requires_grad(self):
        x = Tensor(np.array([[1.0]]))
        y = T.reshape(T.scale(x, 2.0), ())
        backward(y)
        assert x.grad is None

    def test_matmul_grads(self, rng):
        arrays = {"a": rng.standard_normal((3, 4)),
                  "b": rng.standard_normal((4, 2))}
        w = rng.standard_normal((6, 1))
        _grad_matches_fd(
            lambda t: T.reshape(T.matmul(T.reshape(
                T.matmul(t["a"], t["b"]), (1, 6)), Tensor(w)), ()),
            arrays)

    def test_softmax_and_sigmoid_grads(self, rng):
        w = rng.standard_normal((6, 1))
        arrays = {"x": rng.standard_normal((3, 2))}

        def build(t):
            y = T.sigmoid(T.softmax_columns(t["x"]))
            return T.reshape(T.matmul(T.reshape(y, (1, 6)), Tensor(w)), ())
        _grad_matches_fd(build, arrays)

    def test_conv_gap_ce_grads(self, rng):
        arrays = {"x": rng.standard_normal((2, 4, 4)),
                  "k": rng.standard_normal((3, 2, 3, 3)),
                  "b": rng.standard_normal(3)}
        target = np.array([1.0, 0.0, 1.0])

        def build(t):
            y = T.conv2d(t["x"], t["k"], t["b"], stride=2, pad=1)
            return T.sigmoid_ce(T.gap(y), target)
        _grad_matches_fd(build, arrays)

    def test_finite_diff_rejects_bad_eps(self):
        with pytest.raises(ContractError):
            finite_diff_grad(lambda x: 0.0, np.zeros(2), eps=0.0)


class TestMaxRelError:
    def test_zero_for_identical(self, rng):
        a = rng.standard_normal(5)
        assert max_rel_error(a, a.copy()) == 0.0

    def test_unit_denominator_for_small_values(self):
        assert max_rel_error(np.array([1e-8]), np.array([0.0])) == \
            pytest.approx(1e-8)

    def test_relative_for_large_values(self):
        assert max_rel_error(np.array([200.0]), np.array([100.0])) == \
            pytest.approx(0.5)


class TestSerialization:
    @given(st.lists(st.integers(min_value=1, max_value=4),
                    min_size=0, max_size=3))
    @settings(max_examples=30, deadline=None)
    def test_round_trip_any_rank(self, dims):
        arr = np.random.default_rng(sum(dims) + len(dims)).standard_normal(dims)
        buf = io.BytesIO()
        T.write_array(buf, arr)
        buf.seek(0)
        got = T.read_array(buf)
        assert got.shape == arr.shape
        np.testing.assert_array_equal(got, arr)

    def test_round_trip_is_byte_identical(self, rng):
        arr = rng.standard_normal((3, 2))
        buf = io.BytesIO()
        T.write_array(buf, arr)
        raw = buf.getvalue()
        buf2 = io.BytesIO()
        T.write_array(buf2, T.read_array(io.BytesIO(raw)))
        assert buf2.getvalue() == raw

    def test_truncated_header(self):
        with pytest.raises(ParseError, match="header truncated"):
            T.read_array(io.BytesIO(b"\x01"))

    def test_truncated_dims(self):
        with pytest.raises(ParseError, match="dims truncated"):
            T.read_array(io.BytesIO(b"\x02\x00\x00\x00\x03\x00\x00\x00"))

    def test_truncated_payload(self, rng):
        buf = io.BytesIO()
        T.write_array(buf, rng.standard_normal(4))
        with pytest.raises(ParseError, match="payload truncated"):
            T.read_array(io.BytesIO(buf.getvalue()[:-3]))
