"""Differentiable operations on :class:`~formnet.core.tensor.Tensor`.

Binary elementwise ops broadcast only over leading dimensions: the shorter
operand's shape must be a suffix of the longer one (or a scalar).
"""

import math
from typing import Any, List, Optional, Sequence, Tuple
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from ..errors import ShapeError
from .tensor import Function, Tensor, as_tensor

_GELU_C = math.sqrt(2.0 / math.pi)


def _check_broadcast(op: str, a: Tuple[int, ...], b: Tuple[int, ...]) -> None:
    if a == b or a == () or b == ():
        return
    short, long = (a, b) if len(a) < len(b) else (b, a)
    if len(short) < len(long) and long[len(long) - len(short) :] == short:
        return
    raise ShapeError(op, a, b)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead)))


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast("add", a.shape, b.shape)
        return a + b

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        a, b = self.inputs
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast("sub", a.shape, b.shape)
        return a - b

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        a, b = self.inputs
        return _unbroadcast(grad, a.shape), -_unbroadcast(grad, b.shape)


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast("mul", a.shape, b.shape)
        return a * b

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        a, b = self.inputs
        return (
            _unbroadcast(grad * b.data, a.shape),
            _unbroadcast(grad * a.data, b.shape),
        )


class Neg(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return -x

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (-grad,)


class MatMul(Function):
    """Batched matrix product; the right operand may be a plain matrix."""

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if (
            a.ndim < 2
            or b.ndim < 2
            or a.shape[-1] != b.shape[-2]
            or (b.ndim > 2 and a.shape[:-2] != b.shape[:-2])
        ):
            raise ShapeError("matmul", a.shape, b.shape)
        return a @ b

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        a, b = (t.data for t in self.inputs)
        grad_a = grad @ np.swapaxes(b, -1, -2)
        grad_b = np.swapaxes(a, -1, -2) @ grad
        if b.ndim == 2 and grad_b.ndim > 2:
            grad_b = grad_b.reshape((-1,) + b.shape).sum(axis=0)
        return grad_a, grad_b


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int = -1) -> np.ndarray:
        ndim = arrays[0].ndim
        self.axis = axis % ndim
        reference = tuple(np.delete(arrays[0].shape, self.axis))
        for arr in arrays[1:]:
            if arr.ndim != ndim or tuple(np.delete(arr.shape, self.axis)) != reference:
                raise ShapeError("concat", arrays[0].shape, arr.shape)
        self.splits = np.cumsum([arr.shape[self.axis] for arr in arrays])[:-1]
        return np.concatenate(arrays, axis=self.axis)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return tuple(np.split(grad, self.splits, axis=self.axis))


class ReLU(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.active = x > 0
        return np.where(self.active, x, 0.0)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (grad * self.active,)


class GELU(Function):
    """Tanh approximation of the Gaussian error linear unit."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.tanh = np.tanh(_GELU_C * (x + 0.044715 * x**3))
        return 0.5 * x * (1.0 + self.tanh)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        x = self.inputs[0].data
        t = self.tanh
        inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x**2)
        return (grad * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * inner),)


class Sigmoid(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = 0.5 * (1.0 + np.tanh(0.5 * x))
        return self.out

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (grad * self.out * (1.0 - self.out),)


class Softplus(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        x = self.inputs[0].data
        return (grad * 0.5 * (1.0 + np.tanh(0.5 * x)),)


class Log(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.log(x)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (grad / self.inputs[0].data,)


class Exp(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = np.exp(x)
        return self.out

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (grad * self.out,)


class Square(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return x * x

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (2.0 * grad * self.inputs[0].data,)


class Clamp(Function):
    def forward(
        self, x: np.ndarray, low: float = -np.inf, high: float = np.inf
    ) -> np.ndarray:
        self.inside = (x >= low) & (x <= high)
        return np.clip(x, low, high)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (grad * self.inside,)


class Sum(Function):
    def forward(self, x: np.ndarray, axis: Optional[int] = None) -> np.ndarray:
        self.axis = axis
        return x.sum(axis=axis)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        shape = self.inputs[0].shape
        if self.axis is not None:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, shape).copy(),)


class Mean(Function):
    def forward(self, x: np.ndarray, axis: Optional[int] = None) -> np.ndarray:
        self.axis = axis
        self.count = x.size if axis is None else x.shape[axis]
        return x.mean(axis=axis)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        shape = self.inputs[0].shape
        if self.axis is not None:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad / self.count, shape).copy(),)


class Reshape(Function):
    def forward(self, x: np.ndarray, shape: Sequence[int] = ()) -> np.ndarray:
        return x.reshape(tuple(shape))

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (grad.reshape(self.inputs[0].shape),)


class Transpose(Function):
    def forward(
        self, x: np.ndarray, axes: Optional[Sequence[int]] = None
    ) -> np.ndarray:
        self.axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
        return np.transpose(x, self.axes)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (np.transpose(grad, np.argsort(self.axes)),)


class GetItem(Function):
    def forward(self, x: np.ndarray, index: Any = None) -> np.ndarray:
        self.index = index
        return np.array(x[index])

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        out = np.zeros(self.inputs[0].shape, dtype=grad.dtype)
        np.add.at(out, self.index, grad)
        return (out,)


class GatherRows(Function):
    """``table[ids]`` for an integer id vector; the embedding lookup."""

    def forward(self, table: np.ndarray, ids: Any = None) -> np.ndarray:
        self.ids = np.asarray(ids, dtype=np.int64)
        return table[self.ids]

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        out = np.zeros(self.inputs[0].shape, dtype=grad.dtype)
        np.add.at(out, self.ids, grad)
        return (out,)


class ScatterMean(Function):
    """Mean of the rows of ``x`` grouped by destination index."""

    def forward(self, x: np.ndarray, index: Any = None, size: int = 0) -> np.ndarray:
        self.index = np.asarray(index, dtype=np.int64)
        counts = np.bincount(self.index, minlength=size).astype(x.dtype)
        self.scale = 1.0 / np.maximum(counts, 1.0)
        out = np.zeros((size,) + x.shape[1:], dtype=x.dtype)
        np.add.at(out, self.index, x)
        return out * self.scale.reshape((-1,) + (1,) * (x.ndim - 1))

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        scaled = grad * self.scale.reshape((-1,) + (1,) * (grad.ndim - 1))
        return (scaled[self.index],)


class OuterAdd(Function):
    """``out[..., i, j] = u[..., i] + v[..., j]``."""

    def forward(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        if u.shape[:-1] != v.shape[:-1]:
            raise ShapeError("outer_add", u.shape, v.shape)
        return u[..., :, None] + v[..., None, :]

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return grad.sum(axis=-1), grad.sum(axis=-2)


class ScaleRows(Function):
    """Multiply row ``i`` of ``x`` by the constant ``scale[i]``."""

    def forward(self, x: np.ndarray, scale: Any = None) -> np.ndarray:
        scale = np.asarray(scale, dtype=x.dtype)
        if scale.shape != x.shape[:1]:
            raise ShapeError("scale_rows", x.shape, scale.shape)
        self.scale = scale.reshape((-1,) + (1,) * (x.ndim - 1))
        return x * self.scale

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        return (grad * self.scale,)


class Softmax(Function):
    """Max-subtracted softmax; ``False`` mask entries get exactly zero weight."""

    def forward(
        self, x: np.ndarray, axis: int = -1, mask: Optional[np.ndarray] = None
    ) -> np.ndarray:
        self.axis = axis
        if mask is not None:
            if not np.all(np.any(mask, axis=axis)):
                raise ValueError("softmax mask leaves a slice with no allowed entry")
            x = np.where(mask, x, -np.inf)
        shifted = np.exp(x - np.max(x, axis=axis, keepdims=True))
        self.out = shifted / shifted.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        y = self.out
        return (y * (grad - (grad * y).sum(axis=self.axis, keepdims=True)),)


class LogSoftmax(Function):
    def forward(
        self, x: np.ndarray, axis: int = -1, mask: Optional[np.ndarray] = None
    ) -> np.ndarray:
        self.axis = axis
        self.mask = mask
        if mask is not None:
            x = np.where(mask, x, -np.inf)
        shifted = x - np.max(x, axis=axis, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        out = shifted - log_norm
        self.probs = np.exp(out)
        return out if mask is None else np.where(mask, out, 0.0)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        if self.mask is not None:
            grad = np.where(self.mask, grad, 0.0)
        total = grad.sum(axis=self.axis, keepdims=True)
        return (grad - self.probs * total,)


class LayerNorm(Function):
    """Normalise the last axis to zero mean and unit variance, then scale."""

    def forward(
        self, x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-5
    ) -> np.ndarray:
        if x.shape[-1] < 2 or gain.shape != x.shape[-1:] or bias.shape != gain.shape:
            raise ShapeError("layer_norm", x.shape, gain.shape, bias.shape)
        centered = x - x.mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
        self.normed = centered * self.inv_std
        return self.normed * gain + bias

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        gain = self.inputs[1].data
        width = gain.shape[0]
        flat_grad = grad.reshape(-1, width)
        grad_gain = (flat_grad * self.normed.reshape(-1, width)).sum(axis=0)
        grad_bias = flat_grad.sum(axis=0)
        g = grad * gain
        grad_x = self.inv_std * (
            g
            - g.mean(axis=-1, keepdims=True)
            - self.normed * (g * self.normed).mean(axis=-1, keepdims=True)
        )
        return grad_x, grad_gain, grad_bias


class L2Normalize(Function):
    def forward(
        self, x: np.ndarray, axis: int = -1, eps: float = 1e-12
    ) -> np.ndarray:
        self.axis = axis
        self.norm = np.maximum(np.sqrt((x * x).sum(axis=axis, keepdims=True)), eps)
        self.out = x / self.norm
        return self.out

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        y = self.out
        dot = (grad * y).sum(axis=self.axis, keepdims=True)
        return ((grad - y * dot) / self.norm,)


def same_padding(size: int, kernel: int, stride: int) -> Tuple[int, int, int]:
    """Output size and (before, after) padding of the "same" convention."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


class Conv2d(Function):
    """2-D cross-correlation over ``(N, C, H, W)`` with "same" padding."""

    def forward(
        self,
        x: np.ndarray,
        weight: np.ndarray,
        bias: np.ndarray,
        stride: Tuple[int, int] = (1, 1),
    ) -> np.ndarray:
        stride_h, stride_w = stride
        if stride_h <= 0 or stride_w <= 0:
            raise ValueError(f"conv2d strides must be positive, got {stride}")
        if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
            raise ShapeError("conv2d", x.shape, weight.shape)
        n, channels, height, width = x.shape
        out_channels, _, kh, kw = weight.shape
        out_h, top, bottom = same_padding(height, kh, stride_h)
        out_w, left, right = same_padding(width, kw, stride_w)
        padded = np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)))
        windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
        windows = windows[:, :, ::stride_h, ::stride_w][:, :, :out_h, :out_w]
        # (N*out_h*out_w, C*kh*kw) patch matrix
        self.cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(
            n * out_h * out_w, channels * kh * kw
        )
        self.geometry = (padded.shape, top, left, out_h, out_w, stride_h, stride_w)
        out = self.cols @ weight.reshape(out_channels, -1).T + bias
        return out.reshape(n, out_h, out_w, out_channels).transpose(0, 3, 1, 2)

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        x, weight = self.inputs[0].data, self.inputs[1].data
        n, channels, height, width = x.shape
        out_channels, _, kh, kw = weight.shape
        padded_shape, top, left, out_h, out_w, stride_h, stride_w = self.geometry
        flat_grad = grad.transpose(0, 2, 3, 1).reshape(-1, out_channels)
        grad_weight = (flat_grad.T @ self.cols).reshape(weight.shape)
        grad_bias = flat_grad.sum(axis=0)
        grad_cols = (flat_grad @ weight.reshape(out_channels, -1)).reshape(
            n, out_h, out_w, channels, kh, kw
        )
        grad_padded = np.zeros(padded_shape, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                grad_padded[
                    :,
                    :,
                    i : i + stride_h * out_h : stride_h,
                    j : j + stride_w * out_w : stride_w,
                ] += grad_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        grad_x = grad_padded[:, :, top : top + height, left : left + width]
        return grad_x, grad_weight, grad_bias


# functional API


def add(a: Any, b: Any) -> Tensor:
    return Add.apply(as_tensor(a), as_tensor(b))


def sub(a: Any, b: Any) -> Tensor:
    return Sub.apply(as_tensor(a), as_tensor(b))


def mul(a: Any, b: Any) -> Tensor:
    return Mul.apply(as_tensor(a), as_tensor(b))


def neg(x: Tensor) -> Tensor:
    return Neg.apply(x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(as_tensor(a), as_tensor(b))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    return Concat.apply(*(as_tensor(t) for t in tensors), axis=axis)


def affine(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight + bias`` with row-vector inputs; weight is (in, out)."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def gelu(x: Tensor) -> Tensor:
    return GELU.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(as_tensor(x))


def softplus(x: Tensor) -> Tensor:
    return Softplus.apply(as_tensor(x))


def log(x: Tensor) -> Tensor:
    return Log.apply(as_tensor(x))


def exp(x: Tensor) -> Tensor:
    return Exp.apply(as_tensor(x))


def square(x: Tensor) -> Tensor:
    return Square.apply(as_tensor(x))


def clamp(x: Tensor, low: float, high: float) -> Tensor:
    return Clamp.apply(x, low=low, high=high)


def sum(x: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    return Sum.apply(x, axis=axis)


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    return Mean.apply(x, axis=axis)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    return Transpose.apply(x, axes=axes)


def getitem(x: Tensor, index: Any) -> Tensor:
    return GetItem.apply(x, index=index)


def gather_rows(table: Tensor, ids: Any) -> Tensor:
    return GatherRows.apply(table, ids=ids)


def scatter_mean(x: Tensor, index: Any, size: int) -> Tensor:
    return ScatterMean.apply(x, index=index, size=size)


def outer_add(u: Tensor, v: Tensor) -> Tensor:
    return OuterAdd.apply(u, v)


def scale_rows(x: Tensor, scale: Any) -> Tensor:
    return ScaleRows.apply(x, scale=scale)


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    return Softmax.apply(as_tensor(x), axis=axis, mask=mask)


def log_softmax(
    x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None
) -> Tensor:
    return LogSoftmax.apply(as_tensor(x), axis=axis, mask=mask)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    return LayerNorm.apply(x, as_tensor(gain), as_tensor(bias), eps=eps)


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    return L2Normalize.apply(x, axis=axis)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride_h: int = 1,
    stride_w: int = 1,
) -> Tensor:
    return Conv2d.apply(
        as_tensor(x), weight, as_tensor(bias), stride=(stride_h, stride_w)
    )


def cross_entropy(logits: Tensor, targets: Any) -> Tensor:
    """Mean negative log-likelihood of integer targets under row softmax."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError("cross_entropy", logits.shape, targets.shape)
    if targets.size == 0:
        return Tensor(0.0)
    picked = getitem(log_softmax(logits, axis=-1), (np.arange(targets.size), targets))
    return neg(mean(picked))


def stack_rows(rows: List[Tensor]) -> Tensor:
    """Stack 1-D tensors into a matrix."""
    return concat([reshape(row, (1, -1)) for row in rows], axis=0)
