"""Standard layers built from :mod:`formnet.core.functional`."""

from typing import Any, Tuple
from . import functional as F
from .module import Module
from .tensor import Tensor


class Linear(Module):
    """Row-vector affine map ``y = x W + b`` with ``W`` of shape (in, out)."""

    def __init__(
        self, name: str, seed: int, in_dim: int, out_dim: int, bias: bool = True
    ) -> None:
        super().__init__(name, seed)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = self.parameter("weight", (in_dim, out_dim), "weight")
        self.bias = self.parameter("bias", (out_dim,), "bias") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return F.affine(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, name: str, seed: int, dim: int, eps: float = 1e-5) -> None:
        super().__init__(name, seed)
        self.eps = eps
        self.gain = self.parameter("gain", (dim,), "gain")
        self.bias = self.parameter("bias", (dim,), "bias")

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gain, self.bias, eps=self.eps)


class Embedding(Module):
    def __init__(self, name: str, seed: int, num_embeddings: int, dim: int) -> None:
        super().__init__(name, seed)
        self.weight = self.parameter("weight", (num_embeddings, dim), "weight")

    def __call__(self, ids: Any) -> Tensor:
        return F.gather_rows(self.weight, ids)


class Conv2d(Module):
    """Convolution over ``(N, C, H, W)`` maps with "same" padding."""

    def __init__(
        self,
        name: str,
        seed: int,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: Tuple[int, int] = (1, 1),
    ) -> None:
        super().__init__(name, seed)
        self.stride = stride
        self.weight = self.parameter(
            "weight", (out_channels, in_channels, kernel, kernel), "weight"
        )
        self.bias = self.parameter("bias", (out_channels,), "bias")

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, *self.stride)
