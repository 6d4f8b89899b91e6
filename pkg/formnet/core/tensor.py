"""Dense tensors with reverse-mode automatic differentiation.

Tensors wrap a numpy array. Every differentiable operation is a
:class:`Function` subclass; applying one records it as the creator of its
output so :meth:`Tensor.backward` can walk the graph in reverse.
"""

import logging
import os
from abc import ABC, abstractmethod
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union
import numpy as np

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]

_SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_default_dtype = np.dtype(np.float32)


def get_default_dtype() -> np.dtype:
    """Return the float dtype new tensors are created with."""
    return _default_dtype


def set_default_dtype(dtype: Any) -> None:
    """Switch the global float dtype (float32 or float64)."""
    global _default_dtype
    resolved = np.dtype(dtype)
    if resolved not in _SUPPORTED_DTYPES:
        raise ValueError(f"Unsupported tensor dtype {resolved}")
    _default_dtype = resolved
    logger.debug(f"Default tensor dtype set to {resolved}")


@contextmanager
def float64_mode() -> Iterator[None]:
    """Run a block with 64-bit tensors (used for gradient checking)."""
    previous = _default_dtype
    set_default_dtype(np.float64)
    try:
        yield
    finally:
        set_default_dtype(previous)


def debug_enabled() -> bool:
    """Finite checks after every op are on when FORMNET_DEBUG is set."""
    return bool(os.getenv("FORMNET_DEBUG"))


class Function(ABC):
    """A differentiable operation over tensors."""

    def __init__(self, *inputs: "Tensor") -> None:
        self.inputs = inputs

    @abstractmethod
    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        """Compute the output from the input arrays."""

    @abstractmethod
    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        """Map d(loss)/d(output) to d(loss)/d(input) for every input."""

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        fn = cls(*inputs)
        out = np.asarray(
            fn.forward(*(t.data for t in inputs), **kwargs), dtype=_default_dtype
        )
        if debug_enabled() and not np.all(np.isfinite(out)):
            if all(np.all(np.isfinite(t.data)) for t in inputs):
                raise FloatingPointError(
                    f"{cls.__name__} produced non-finite values from finite inputs"
                )
        requires_grad = any(t.requires_grad for t in inputs)
        creator = fn if requires_grad else None
        return Tensor(out, requires_grad=requires_grad, _creator=creator)


class Tensor:
    """An n-dimensional float array that can carry gradients.

    Leaf tensors created with ``requires_grad=True`` own a ``grad`` buffer of
    the same shape. Gradients accumulate additively until zeroed.
    """

    # numpy defers mixed arithmetic to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        _creator: Optional[Function] = None,
    ) -> None:
        self.data = np.asarray(data, dtype=_default_dtype)
        self.requires_grad = requires_grad
        self._creator = _creator
        self.grad: Optional[np.ndarray] = (
            np.zeros_like(self.data) if requires_grad and _creator is None else None
        )

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._creator is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def backward(self) -> None:
        """Populate ``grad`` of every reachable leaf with d(self)/d(leaf)."""
        if self.data.size != 1:
            raise ValueError(
                f"backward() needs a scalar loss, got shape {self.shape}"
            )
        if not self.requires_grad:
            logger.debug("backward() on a tensor that does not require grad")
            return
        grads: Dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(_topological_order(self)):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node._creator is None:
                if node.grad is not None:
                    node.grad += grad
                continue
            input_grads = node._creator.backward(grad)
            for inp, inp_grad in zip(node._creator.inputs, input_grads):
                if inp_grad is None or not inp.requires_grad:
                    continue
                key = id(inp)
                grads[key] = grads[key] + inp_grad if key in grads else inp_grad

    # operator sugar; the ops themselves live in functional
    def __add__(self, other: Any) -> "Tensor":
        return F.add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return F.add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return F.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return F.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return F.mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return F.mul(other, self)

    def __truediv__(self, other: float) -> "Tensor":
        return F.mul(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        return F.neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return F.matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return F.getitem(self, index)

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return F.sum(self, axis=axis)

    def mean(self, axis: Optional[int] = None) -> "Tensor":
        return F.mean(self, axis=axis)

    def reshape(self, *shape: int) -> "Tensor":
        return F.reshape(self, shape)

    @property
    def T(self) -> "Tensor":
        return F.transpose(self)


def as_tensor(value: Any) -> Tensor:
    """Wrap plain arrays and numbers; tensors pass through unchanged."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _topological_order(root: Tensor) -> List[Tensor]:
    """Post-order over the recorded graph: inputs precede their consumers."""
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._creator is not None:
            for inp in node._creator.inputs:
                if inp.requires_grad and id(inp) not in visited:
                    stack.append((inp, False))
    return order


from . import functional as F  # noqa: E402
