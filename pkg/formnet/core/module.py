"""Parameter containers with deterministic, name-seeded initialisation."""

import logging
import zlib
from collections import OrderedDict
from typing import Dict, Iterator, List, Tuple
import numpy as np
from .tensor import Tensor

logger = logging.getLogger(__name__)

INIT_STD = 0.02


def init_parameter(
    name: str, shape: Tuple[int, ...], seed: int, kind: str
) -> np.ndarray:
    """Initial values for a parameter.

    ``kind`` is ``"weight"`` (normal with std 0.02, redrawn outside two
    standard deviations), ``"bias"`` (zeros) or ``"gain"`` (ones). Weights
    depend only on ``(seed, name)``.
    """
    if kind == "bias":
        return np.zeros(shape)
    if kind == "gain":
        return np.ones(shape)
    if kind != "weight":
        raise ValueError(f"Unknown parameter kind {kind!r} for {name}")
    rng = np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])
    values = rng.standard_normal(shape)
    outside = np.abs(values) > 2.0
    while outside.any():
        values[outside] = rng.standard_normal(int(outside.sum()))
        outside = np.abs(values) > 2.0
    return values * INIT_STD


class Parameter(Tensor):
    """A trainable leaf tensor with a unique dotted name."""

    def __init__(self, name: str, data: np.ndarray) -> None:
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.shape})"


class Module:
    """Base class for anything that owns parameters.

    Parameters are discovered from attributes: a :class:`Parameter`, a child
    :class:`Module`, or a list of modules. Each module is built with a dotted
    name prefix so every parameter name is unique within a model.
    """

    def __init__(self, name: str, seed: int) -> None:
        self.name = name
        self.seed = seed

    def parameter(
        self, local_name: str, shape: Tuple[int, ...], kind: str
    ) -> Parameter:
        full_name = f"{self.name}.{local_name}" if self.name else local_name
        return Parameter(full_name, init_parameter(full_name, shape, self.seed, kind))

    def child_name(self, local_name: str) -> str:
        return f"{self.name}.{local_name}" if self.name else local_name

    def _children(self) -> Iterator[object]:
        for value in vars(self).values():
            if isinstance(value, (list, tuple)):
                yield from value
            else:
                yield value

    def named_parameters(self) -> List[Tuple[str, Parameter]]:
        found: List[Tuple[str, Parameter]] = []
        seen = set()
        stack: List[object] = [self]
        while stack:
            node = stack.pop(0)
            if isinstance(node, Parameter):
                if id(node) not in seen:
                    seen.add(id(node))
                    found.append((node.name, node))
            elif isinstance(node, Module):
                if id(node) in seen:
                    continue
                seen.add(id(node))
                stack.extend(node._children())
        names = [name for name, _ in found]
        if len(names) != len(set(names)):
            duplicates = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"Duplicate parameter names: {duplicates}")
        return sorted(found, key=lambda item: item[0])

    def parameters(self) -> Dict[str, Parameter]:
        return OrderedDict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def zero_grad(self) -> None:
        for _, param in self.named_parameters():
            param.zero_grad()
