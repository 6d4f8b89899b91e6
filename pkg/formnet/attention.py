"""Rich Attention scoring and ETC-style local/global transformer layers.

For a query token i and key token j the pre-softmax score is

    s_ij = q_i . k_j + sum over axes a in {x, y} of (order_a + distance_a)

where ``order_a = o ln p + (1 - o) ln(1 - p)`` rewards the predicted reading
order and ``distance_a = -theta^2 (d - mu)^2 / 2`` penalises unexpected
distances. ``p`` and ``mu`` are affine functions of ``[q_i; k_j]``; ``o`` is
``int(x_i < x_j)`` and ``d`` is ``ln(1 + |x_i - x_j|)`` in page pixels.
Pairs involving a global token keep the dot product only.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from .core import functional as F
from .core.layers import LayerNorm, Linear
from .core.module import Module, Parameter
from .core.tensor import Tensor

logger = logging.getLogger(__name__)

P_EPS = 1e-6
AXES = ("x", "y")


class EtcConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    local_radius: int = Field(default=4, ge=1)
    num_global: int = Field(default=1, ge=1)
    num_heads: int = Field(default=4, ge=1)
    hidden: int = Field(default=64, ge=1)

    @model_validator(mode="after")
    def _heads_divide_hidden(self) -> "EtcConfig":
        if self.hidden % self.num_heads:
            raise ValueError(
                f"hidden {self.hidden} is not divisible by {self.num_heads} heads"
            )
        return self

    @property
    def head_dim(self) -> int:
        return self.hidden // self.num_heads


@dataclass
class TokenGeometry:
    """Box centers in page pixels; global tokens sit at (0, 0)."""

    x: np.ndarray
    y: np.ndarray
    is_global: np.ndarray

    def __len__(self) -> int:
        return int(self.x.shape[0])

    def axis(self, name: str) -> np.ndarray:
        return self.x if name == "x" else self.y

    def rich_pairs(self) -> np.ndarray:
        """True where both tokens carry page geometry."""
        local = ~self.is_global
        return local[:, None] & local[None, :]

    def take(self, order: np.ndarray) -> "TokenGeometry":
        return TokenGeometry(self.x[order], self.y[order], self.is_global[order])


def order_indicator(x_i: np.ndarray, x_j: np.ndarray) -> np.ndarray:
    """1 where ``x_i < x_j`` strictly, else 0."""
    return (np.asarray(x_i) < np.asarray(x_j)).astype(np.float64)


def log_distance(x_i: np.ndarray, x_j: np.ndarray) -> np.ndarray:
    return np.log1p(np.abs(np.asarray(x_i, dtype=np.float64) - np.asarray(x_j)))


def order_score(o: float, p: float) -> float:
    p = min(max(p, P_EPS), 1.0 - P_EPS)
    return o * math.log(p) + (1.0 - o) * math.log(1.0 - p)


def distance_score(d: float, mu: float, theta: float) -> float:
    return -(theta**2) * (d - mu) ** 2 / 2.0


def etc_mask(n_tokens: int, cfg: EtcConfig) -> np.ndarray:
    """Allowed query/key pairs: globals see everything, locals see the
    globals plus a window of ``local_radius`` on each side."""
    g, k = cfg.num_global, cfg.local_radius
    if n_tokens < g:
        raise ValueError(f"sequence of {n_tokens} tokens is shorter than {g} globals")
    idx = np.arange(n_tokens)
    window = (np.abs(idx[:, None] - idx[None, :]) <= k) & (idx[None, :] >= g)
    mask = window | (idx[None, :] < g)
    mask[:g, :] = True
    return mask


def allowed_pairs(n_tokens: int, cfg: EtcConfig) -> int:
    """Number of allowed pairs of :func:`etc_mask`, without building it."""
    g, k = cfg.num_global, cfg.local_radius
    rows = np.arange(g, n_tokens)
    window = np.minimum(rows + k, n_tokens - 1) - np.maximum(rows - k, g) + 1
    return int(g * n_tokens + (n_tokens - g) * g + window.sum())


class RichAttentionHead(Module):
    """Per-axis order and distance parameters of one attention head."""

    def __init__(self, name: str, seed: int, head_dim: int) -> None:
        super().__init__(name, seed)
        self.head_dim = head_dim
        self.order_affine = [
            Linear(self.child_name(f"order_{a}"), seed, 2 * head_dim, 1) for a in AXES
        ]
        self.mu_affine = [
            Linear(self.child_name(f"mu_{a}"), seed, 2 * head_dim, 1) for a in AXES
        ]
        # softplus(ln(e - 1)) == 1
        self.theta_raw = [
            Parameter(
                self.child_name(f"theta_raw_{a}"), np.array(math.log(math.e - 1.0))
            )
            for a in AXES
        ]

    def theta(self, axis: int) -> Tensor:
        return F.softplus(self.theta_raw[axis])

    def _pair_affine(self, layer: Linear, q: Tensor, k: Tensor) -> Tensor:
        d = self.head_dim
        from_q = F.reshape(F.matmul(q, layer.weight[:d]), (q.shape[0],))
        from_k = F.reshape(F.matmul(k, layer.weight[d:]), (k.shape[0],))
        assert layer.bias is not None
        return F.outer_add(from_q, from_k) + F.reshape(layer.bias, ())

    def scores(
        self,
        q: Tensor,
        k: Tensor,
        geom_q: TokenGeometry,
        geom_k: TokenGeometry,
    ) -> Tensor:
        """Rich scores of every (query, key) pair, shape (n_q, n_k)."""
        total = F.matmul(q, F.transpose(k))
        rich_pairs = ~(geom_q.is_global[:, None] | geom_k.is_global[None, :])
        if not rich_pairs.any():
            return total
        rich: Optional[Tensor] = None
        for a, name in enumerate(AXES):
            pos_q, pos_k = geom_q.axis(name), geom_k.axis(name)
            o = order_indicator(pos_q[:, None], pos_k[None, :])
            d = log_distance(pos_q[:, None], pos_k[None, :])
            p = F.clamp(
                F.sigmoid(self._pair_affine(self.order_affine[a], q, k)),
                P_EPS,
                1.0 - P_EPS,
            )
            order = o * F.log(p) + (1.0 - o) * F.log(1.0 - p)
            mu = self._pair_affine(self.mu_affine[a], q, k)
            theta_sq = F.reshape(F.square(self.theta(a)), ())
            distance = F.neg(theta_sq * F.square(d - mu)) * 0.5
            term = order + distance
            rich = term if rich is None else rich + term
        assert rich is not None
        return total + rich * rich_pairs.astype(np.float64)


def rich_score(
    q_i: Tensor,
    k_j: Tensor,
    geom_i: Tuple[float, float],
    geom_j: Tuple[float, float],
    head: RichAttentionHead,
    involves_global: bool = False,
) -> Tensor:
    """Score of a single (query, key) pair as a scalar tensor."""
    flag = np.array([involves_global])
    gi = TokenGeometry(np.array([geom_i[0]]), np.array([geom_i[1]]), flag)
    gj = TokenGeometry(np.array([geom_j[0]]), np.array([geom_j[1]]), flag)
    q = F.reshape(q_i, (1, -1))
    k = F.reshape(k_j, (1, -1))
    return F.reshape(head.scores(q, k, gi, gj), ())


class EtcLayer(Module):
    """Multi-head Rich Attention with post-norm residuals and a GELU
    feed-forward block of width ``2 * hidden``."""

    def __init__(self, name: str, seed: int, cfg: EtcConfig) -> None:
        super().__init__(name, seed)
        self.cfg = cfg
        hidden = cfg.hidden
        self.query = Linear(self.child_name("query"), seed, hidden, hidden)
        self.key = Linear(self.child_name("key"), seed, hidden, hidden)
        self.value = Linear(self.child_name("value"), seed, hidden, hidden)
        self.output = Linear(self.child_name("output"), seed, hidden, hidden)
        self.heads = [
            RichAttentionHead(self.child_name(f"head{h}"), seed, cfg.head_dim)
            for h in range(cfg.num_heads)
        ]
        self.attention_norm = LayerNorm(self.child_name("attention_norm"), seed, hidden)
        self.ffn_in = Linear(self.child_name("ffn_in"), seed, hidden, 2 * hidden)
        self.ffn_out = Linear(self.child_name("ffn_out"), seed, 2 * hidden, hidden)
        self.ffn_norm = LayerNorm(self.child_name("ffn_norm"), seed, hidden)
        self.keep_attention = False
        self.last_attention: List[np.ndarray] = []

    def __call__(self, h: Tensor, geometry: TokenGeometry, mask: np.ndarray) -> Tensor:
        if not mask.any(axis=-1).all():
            raise AssertionError("attention mask leaves a query without keys")
        dh = self.cfg.head_dim
        queries = self.query(h) * (1.0 / math.sqrt(dh))
        keys = self.key(h)
        values = self.value(h)
        outputs = []
        self.last_attention = []
        for index, head in enumerate(self.heads):
            cols = slice(index * dh, (index + 1) * dh)
            q = queries[:, cols]
            k = keys[:, cols]
            scores = head.scores(q, k, geometry, geometry)
            weights = F.softmax(scores, axis=-1, mask=mask)
            if self.keep_attention:
                self.last_attention.append(weights.data.copy())
            outputs.append(F.matmul(weights, values[:, cols]))
        attended = self.output(F.concat(outputs, axis=-1))
        h = self.attention_norm(h + attended)
        ffn = self.ffn_out(F.gelu(self.ffn_in(h)))
        return self.ffn_norm(h + ffn)
