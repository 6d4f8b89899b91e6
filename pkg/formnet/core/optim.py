"""Adam optimiser."""

import logging
from typing import Dict, Mapping, Optional
import numpy as np
from .module import Parameter

logger = logging.getLogger(__name__)


class Adam:
    """Adam with bias correction. Moment buffers are keyed by parameter name."""

    def __init__(
        self,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        if lr < 0:
            raise ValueError(f"Learning rate must be non-negative, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moment: Dict[str, np.ndarray] = {}
        self.second_moment: Dict[str, np.ndarray] = {}

    def step(self, params: Mapping[str, Parameter], lr: Optional[float] = None) -> None:
        """Apply one update to every parameter and zero its gradient."""
        for name, param in params.items():
            if param.grad is None:
                raise ValueError(f"Parameter {name} has no gradient buffer")
        rate = self.lr if lr is None else lr
        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1**t
        correction2 = 1.0 - self.beta2**t
        for name, param in params.items():
            grad = param.grad
            assert grad is not None
            m = self.first_moment.get(name)
            v = self.second_moment.get(name)
            if m is None or v is None:
                m = np.zeros_like(param.data)
                v = np.zeros_like(param.data)
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self.first_moment[name] = m
            self.second_moment[name] = v
            update = rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            param.data -= update.astype(param.data.dtype)
            param.zero_grad()
        logger.debug(f"Adam step={t} lr={rate:.3g} params={len(params)}")
