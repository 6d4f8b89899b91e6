"""Central-difference gradient checks."""

from typing import Callable, Mapping
import numpy as np
from .module import Parameter
from .tensor import Tensor


def finite_diff_check(
    f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5
) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    The relative error of a coordinate is ``|a - n| / (|a| + 1e-8)``.
    """
    point = Tensor(x.data.copy(), requires_grad=True)
    f(point).backward()
    assert point.grad is not None
    analytic = point.grad.copy()
    numeric = np.zeros_like(analytic)
    base = x.data.copy()
    for idx in np.ndindex(base.shape):
        original = base[idx]
        base[idx] = original + h
        plus = f(Tensor(base.copy())).item()
        base[idx] = original - h
        minus = f(Tensor(base.copy())).item()
        base[idx] = original
        numeric[idx] = (plus - minus) / (2.0 * h)
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / (np.abs(analytic) + 1e-8)))


def check_parameter_gradients(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Parameter],
    h: float = 1e-6,
    samples_per_param: int = 3,
    seed: int = 0,
) -> float:
    """Spot-check parameter gradients of a model loss.

    A few coordinates per parameter are perturbed in place. Relative error is
    measured against ``max(|a|, |n|, 1e-6)`` so coordinates whose gradient is
    numerically zero do not dominate.
    """
    for param in params.values():
        param.zero_grad()
    loss_fn().backward()
    analytic = {name: p.grad.copy() for name, p in params.items() if p.grad is not None}
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, param in params.items():
        flat = param.data.reshape(-1)
        count = min(samples_per_param, flat.size)
        picks = rng.choice(flat.size, size=count, replace=False)
        for k in picks:
            original = flat[k]
            flat[k] = original + h
            plus = loss_fn().item()
            flat[k] = original - h
            minus = loss_fn().item()
            flat[k] = original
            numeric = (plus - minus) / (2.0 * h)
            a = analytic[name].reshape(-1)[k]
            gap = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, float(gap))
    for param in params.values():
        param.zero_grad()
    return worst
