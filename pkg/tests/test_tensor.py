"""Tests for the tensor and functional modules."""

import math
import numpy as np
import pytest
from formnet.core import functional as F
from formnet.core.gradcheck import finite_diff_check
from formnet.core.module import Parameter
from formnet.core.tensor import Tensor, float64_mode, get_default_dtype
from formnet.errors import ShapeError


def _weighted(op, out_shape, seed):
    """Scalar objective ``sum(op(x) * r)`` with fixed random weights ``r``."""
    r = Tensor(np.random.default_rng(seed + 1000).normal(size=out_shape))
    return lambda t: F.sum(F.mul(op(t), r))


def _conv_op(t):
    kernel = Tensor(np.linspace(-1.0, 1.0, 9).reshape(1, 1, 3, 3))
    rows, cols = t.shape
    return F.conv2d(F.reshape(t, (1, 1, rows, cols)), kernel, Tensor(np.zeros(1)))


OPS = {
    "add": lambda t: F.add(t, Tensor(np.full(t.shape, 0.5))),
    "mul": lambda t: F.mul(t, t),
    "matmul": lambda t: F.matmul(t, Tensor(np.ones((t.shape[1], 3)) * 0.3)),
    "concat": lambda t: F.concat([t, F.mul(t, 2.0)], axis=-1),
    "affine": lambda t: F.affine(
        t, Tensor(np.eye(t.shape[1]) * 0.7), Tensor(np.ones(t.shape[1]))
    ),
    "gelu": F.gelu,
    "relu": F.relu,
    "sigmoid": F.sigmoid,
    "softplus": F.softplus,
    "exp": F.exp,
    "log": lambda t: F.log(F.add(F.square(t), 1.0)),
    "softmax": F.softmax,
    "log_softmax": F.log_softmax,
    "layer_norm": lambda t: F.layer_norm(
        t, Tensor(np.linspace(0.5, 1.5, t.shape[1])), Tensor(np.zeros(t.shape[1]))
    ),
    "l2_normalize": F.l2_normalize,
    "mean": lambda t: F.mean(t, axis=0),
    "transpose": F.transpose,
    "conv2d": _conv_op,
}


@pytest.mark.parametrize("name", sorted(OPS))
@pytest.mark.parametrize("seed", range(20))
def test_ops_match_finite_differences(float64, name, seed):
    """Test every op against central differences on random shapes."""
    rng = np.random.default_rng(seed)
    shape = (int(rng.integers(1, 5)), int(rng.integers(2, 6)))
    x = Tensor(rng.normal(size=shape))
    op = OPS[name]
    f = _weighted(op, op(x).shape, seed)
    assert finite_diff_check(f, x, h=1e-5) < 1e-3


def test_conv2d_kernel_gradient(float64):
    """Test the conv2d gradient with respect to its kernel."""
    rng = np.random.default_rng(3)
    image = Tensor(rng.normal(size=(1, 2, 6, 5)))
    bias = Tensor(np.zeros(3))
    r = Tensor(rng.normal(size=(1, 3, 3, 3)))

    def f(kernel):
        return F.sum(F.mul(F.conv2d(image, kernel, bias, 2, 2), r))

    kernel = Tensor(rng.normal(size=(3, 2, 3, 3)))
    assert finite_diff_check(f, kernel) < 1e-3


def test_float32_gradients_within_loose_tolerance():
    """Test that 32-bit gradients agree with differences at a looser tolerance."""
    assert get_default_dtype() == np.float32
    x = Tensor(np.array([0.3, -1.2, 0.8]))
    assert finite_diff_check(lambda t: F.sum(F.square(t)), x, h=1e-2) < 1e-2


def test_affine_identity():
    """Test affine with an identity weight and zero bias."""
    out = F.affine(Tensor([[3.0, -1.0]]), Tensor(np.eye(2)), Tensor(np.zeros(2)))
    np.testing.assert_allclose(out.data, [[3.0, -1.0]])


def test_sigmoid_at_zero():
    """Test the sigmoid symmetry point."""
    assert F.sigmoid(Tensor(0.0)).item() == pytest.approx(0.5)


def test_matmul_shape_mismatch_names_both_shapes():
    """Test that a non-conforming matmul reports both operand shapes."""
    with pytest.raises(ShapeError) as excinfo:
        F.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))
    assert "(2, 3)" in str(excinfo.value)
    assert "(4, 5)" in str(excinfo.value)


def test_broadcast_only_over_leading_dimensions():
    """Test that suffix broadcasting works and anything else fails."""
    out = F.add(Tensor(np.zeros((2, 3))), Tensor(np.arange(3.0)))
    np.testing.assert_allclose(out.data, [[0, 1, 2], [0, 1, 2]])
    with pytest.raises(ShapeError):
        F.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros(2)))


def test_softmax_examples():
    """Test softmax on uniform, shifted and hand-computed inputs."""
    uniform = F.softmax(Tensor([0.0, 0.0, 0.0])).data
    np.testing.assert_allclose(uniform, [1 / 3] * 3, atol=1e-7)
    base = F.softmax(Tensor([0.0, 1.0])).data
    shifted = F.softmax(Tensor([40.0, 41.0])).data
    np.testing.assert_allclose(shifted, base, atol=1e-6)
    np.testing.assert_allclose(
        F.softmax(Tensor([0.0, math.log(3.0)])).data, [0.25, 0.75], atol=1e-6
    )


def test_softmax_rows_sum_to_one():
    """Test that softmax rows sum to one for large random logits."""
    x = Tensor(np.random.default_rng(0).normal(scale=30.0, size=(16, 9)))
    out = F.softmax(x).data
    np.testing.assert_allclose(out.sum(axis=-1), np.ones(16), atol=1e-6)
    assert np.all(out >= 0.0)


def test_softmax_mask():
    """Test that masked entries get exactly zero weight."""
    mask = np.array([[True, False, True], [False, True, False]])
    out = F.softmax(Tensor(np.ones((2, 3))), mask=mask).data
    np.testing.assert_allclose(out, [[0.5, 0.0, 0.5], [0.0, 1.0, 0.0]], atol=1e-7)
    with pytest.raises(ValueError):
        F.softmax(Tensor(np.ones((1, 2))), mask=np.array([[False, False]]))


def test_layer_norm_examples():
    """Test layer norm on constant, two-element and zero-gain rows."""
    ones, zeros = Tensor(np.ones(4)), Tensor(np.zeros(4))
    flat = F.layer_norm(Tensor([[5.0, 5.0, 5.0, 5.0]]), ones, zeros)
    np.testing.assert_allclose(flat.data, np.zeros((1, 4)), atol=1e-6)
    pair = F.layer_norm(Tensor([[1.0, -1.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)))
    np.testing.assert_allclose(pair.data, [[1.0, -1.0]], atol=1e-4)
    bias = Tensor([1.0, 2.0, 3.0, 4.0])
    out = F.layer_norm(Tensor([[0.1, 7.0, -2.0, 3.0]]), zeros, bias)
    np.testing.assert_allclose(out.data, [[1.0, 2.0, 3.0, 4.0]])


def test_conv2d_examples():
    """Test conv2d identity, interior sum and stride shape."""
    x = Tensor(np.random.default_rng(1).normal(size=(1, 1, 5, 4)))
    identity = F.conv2d(x, Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros(1)))
    np.testing.assert_allclose(identity.data, x.data)

    constant = Tensor(np.full((1, 1, 5, 5), 2.0))
    summed = F.conv2d(constant, Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros(1)))
    assert summed.data[0, 0, 2, 2] == pytest.approx(18.0)

    strided = F.conv2d(
        Tensor(np.zeros((1, 1, 8, 8))),
        Tensor(np.ones((1, 1, 3, 3))),
        Tensor(np.zeros(1)),
        2,
        2,
    )
    assert strided.shape == (1, 1, 4, 4)


def test_conv2d_rejects_non_positive_stride():
    """Test that a zero stride is an error."""
    with pytest.raises(ValueError):
        F.conv2d(
            Tensor(np.zeros((1, 1, 4, 4))),
            Tensor(np.ones((1, 1, 3, 3))),
            Tensor(np.zeros(1)),
            0,
            1,
        )


def test_same_padding():
    """Test the output size rule ceil(in / stride)."""
    assert F.same_padding(7, 3, 2) == (4, 1, 1)
    assert F.same_padding(8, 3, 2) == (4, 0, 1)
    assert F.same_padding(5, 3, 1) == (5, 1, 1)


def test_cross_entropy():
    """Test cross entropy on a hand example and on empty targets."""
    logits = Tensor([[0.0, math.log(3.0)]])
    assert F.cross_entropy(logits, [1]).item() == pytest.approx(-math.log(0.75))
    assert F.cross_entropy(Tensor(np.zeros((0, 3))), []).item() == 0.0


def test_backward_sum_of_squares():
    """Test the analytic gradient of sum(w * w)."""
    w = Parameter("w", np.array([1.0, 2.0]))
    F.sum(F.mul(w, w)).backward()
    np.testing.assert_allclose(w.grad, [2.0, 4.0])


def test_backward_leaves_unreachable_gradients_untouched():
    """Test that a loss independent of w leaves its gradient at zero."""
    w = Parameter("w", np.array([1.0, 2.0]))
    x = Parameter("x", np.array([3.0]))
    F.sum(F.mul(x, x)).backward()
    np.testing.assert_array_equal(w.grad, [0.0, 0.0])


def test_gradients_accumulate():
    """Test that two backward passes add their gradients."""
    w = Parameter("w", np.array([1.0, 2.0]))
    F.sum(F.mul(w, 3.0)).backward()
    F.sum(F.mul(w, 3.0)).backward()
    np.testing.assert_allclose(w.grad, [6.0, 6.0])


def test_backward_needs_scalar():
    """Test that backward on a vector is an error."""
    w = Parameter("w", np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        F.mul(w, 2.0).backward()


def test_finite_diff_check_examples(float64):
    """Test the gradient checker on sum of squares and a linear function."""
    x = Tensor([1.0, 2.0, 3.0])
    assert finite_diff_check(lambda t: F.sum(F.square(t)), x, h=1e-4) < 1e-6
    linear = _weighted(lambda t: t, (3,), 0)
    assert finite_diff_check(linear, x, h=0.5) < 1e-9


def test_cross_entropy_gradient(float64):
    """Test softmax cross entropy against finite differences."""
    logits = Tensor(np.random.default_rng(2).normal(size=(4, 6)))
    targets = [0, 5, 2, 2]
    error = finite_diff_check(lambda t: F.cross_entropy(t, targets), logits)
    assert error < 1e-4


def test_float64_mode_restores_default():
    """Test that the 64-bit mode is scoped."""
    with pytest.raises(RuntimeError):
        with float64_mode():
            assert Tensor(1.0).data.dtype == np.float64
            raise RuntimeError("boom")
    assert get_default_dtype() == np.float32


def test_debug_mode_flags_non_finite_results(monkeypatch):
    """Test that FORMNET_DEBUG turns an overflow into an error naming the op."""
    big = Tensor([1000.0])
    with np.errstate(over="ignore"):
        assert np.isinf(F.exp(big).item())
        monkeypatch.setenv("FORMNET_DEBUG", "1")
        with pytest.raises(FloatingPointError, match="Exp"):
            F.exp(big)
