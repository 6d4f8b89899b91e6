"""Edge-level image features.

A small ConvNet embeds the whole resized page once; every graph edge then
pools the union box of its two tokens into a fixed grid (bilinear sampling,
RoIAlign style) and a second ConvNet refines the grid into a flat vector.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple
import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field, model_validator
from .core import functional as F
from .core.layers import Conv2d
from .core.module import Module
from .core.tensor import Function, Tensor
from .errors import RegionError

logger = logging.getLogger(__name__)

ROI_CHUNK = 256


class ImageEmbedderConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    input_size: int = Field(default=512, gt=0)
    backbone_filters: Tuple[int, ...] = (32, 64, 128)
    backbone_strides: Tuple[int, ...] = (1, 2, 1)
    kernel_size: int = Field(default=3, gt=0)
    roi_height: int = Field(default=3, gt=0)
    roi_width: int = Field(default=16, gt=0)
    sampling_ratio: int = Field(default=2, gt=0)
    refiner_filters: Tuple[int, ...] = (64, 32, 16)
    refiner_strides: Tuple[Tuple[int, int], ...] = ((1, 2), (1, 2), (1, 1))

    @model_validator(mode="after")
    def _layer_counts(self) -> "ImageEmbedderConfig":
        if len(self.backbone_filters) != len(self.backbone_strides):
            raise ValueError("backbone_filters and backbone_strides differ in length")
        if len(self.refiner_filters) != len(self.refiner_strides):
            raise ValueError("refiner_filters and refiner_strides differ in length")
        refiner = [s for pair in self.refiner_strides for s in pair]
        strides = list(self.backbone_strides) + refiner
        if min(strides) <= 0:
            raise ValueError("strides must be positive")
        return self

    @property
    def total_stride(self) -> int:
        return int(np.prod(self.backbone_strides))

    @property
    def map_size(self) -> int:
        size = self.input_size
        for stride in self.backbone_strides:
            size = -(-size // stride)
        return size

    @property
    def refined_grid(self) -> Tuple[int, int]:
        height, width = self.roi_height, self.roi_width
        for stride_h, stride_w in self.refiner_strides:
            height, width = -(-height // stride_h), -(-width // stride_w)
        return height, width

    @property
    def output_dim(self) -> int:
        height, width = self.refined_grid
        return self.refiner_filters[-1] * height * width


def output_dim(config: ImageEmbedderConfig) -> int:
    """Width of the per-edge image feature vector (192 with defaults)."""
    return config.output_dim


@dataclass(frozen=True)
class ResizeTransform:
    """Maps page-pixel coordinates to the resized square raster."""

    scale: float

    def apply(self, boxes: np.ndarray) -> np.ndarray:
        return np.asarray(boxes, dtype=np.float64) * self.scale


@dataclass
class DenseFeatureMap:
    features: Tensor
    scale: float

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.features.shape


def resize_pad(
    image: np.ndarray, size: int = 512
) -> Tuple[np.ndarray, ResizeTransform]:
    """Fit the longer page side to ``size`` and zero-pad bottom/right."""
    if image.ndim != 2 or image.size == 0:
        raise ValueError(f"resize_pad needs a non-empty 2-D raster, got {image.shape}")
    height, width = image.shape
    scale = size / float(max(height, width))
    new_w = max(1, int(round(width * scale)))
    new_h = max(1, int(round(height * scale)))
    if (new_h, new_w) == (height, width):
        content = np.asarray(image, dtype=np.float32)
    else:
        resized = Image.fromarray(np.asarray(image, dtype=np.float32)).resize(
            (new_w, new_h), Image.BILINEAR
        )
        content = np.asarray(resized, dtype=np.float32)
    canvas = np.zeros((size, size), dtype=np.float32)
    canvas[:new_h, :new_w] = content
    return canvas, ResizeTransform(scale)


def union_box(box_i: np.ndarray, box_j: np.ndarray) -> np.ndarray:
    a = np.asarray(box_i, dtype=np.float64)
    b = np.asarray(box_j, dtype=np.float64)
    low = np.minimum(a[..., :2], b[..., :2])
    high = np.maximum(a[..., 2:], b[..., 2:])
    return np.concatenate([low, high], axis=-1)


def _sample_axis(
    start: np.ndarray, length: np.ndarray, bins: int, ratio: int, limit: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bilinear taps along one axis: (low index, high index, high weight)."""
    offsets = (np.arange(bins * ratio) + 0.5) / ratio
    coords = start[:, None] + offsets[None, :] * (length[:, None] / bins) - 0.5
    coords = np.clip(coords, 0.0, limit - 1)
    low = np.floor(coords).astype(np.int64)
    high = np.minimum(low + 1, limit - 1)
    return low, high, coords - low


class RoIAlign(Function):
    """Pool ``(C, H, W)`` features inside map-space boxes into ``(E, C, gh, gw)``."""

    def forward(
        self,
        features: np.ndarray,
        rois: Optional[np.ndarray] = None,
        grid: Tuple[int, int] = (3, 16),
        ratio: int = 2,
    ) -> np.ndarray:
        assert rois is not None
        channels, height, width = features.shape
        gh, gw = grid
        self.grid, self.ratio = grid, ratio
        heights = rois[:, 3] - rois[:, 1]
        widths = rois[:, 2] - rois[:, 0]
        self.y_taps = _sample_axis(rois[:, 1], heights, gh, ratio, height)
        self.x_taps = _sample_axis(rois[:, 0], widths, gw, ratio, width)
        out = np.zeros((rois.shape[0], channels, gh, gw), dtype=features.dtype)
        for lo in range(0, rois.shape[0], ROI_CHUNK):
            hi = min(lo + ROI_CHUNK, rois.shape[0])
            samples = np.zeros((channels, hi - lo, gh * ratio, gw * ratio))
            for (ys, wy), (xs, wx) in self._corners(lo, hi):
                weight = wy[:, :, None] * wx[:, None, :]
                samples += features[:, ys[:, :, None], xs[:, None, :]] * weight
            cells = samples.reshape(channels, hi - lo, gh, ratio, gw, ratio)
            cells = cells.mean(axis=(3, 5))
            out[lo:hi] = cells.transpose(1, 0, 2, 3)
        return out

    def _corners(
        self, lo: int, hi: int
    ) -> List[Tuple[Tuple[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]]:
        y_low, y_high, ly = (a[lo:hi] for a in self.y_taps)
        x_low, x_high, lx = (a[lo:hi] for a in self.x_taps)
        ys = [(y_low, 1.0 - ly), (y_high, ly)]
        xs = [(x_low, 1.0 - lx), (x_high, lx)]
        return [(y, x) for y in ys for x in xs]

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        channels, height, width = self.inputs[0].shape
        gh, gw = self.grid
        ratio = self.ratio
        plane = height * width
        flat = np.zeros(channels * plane)
        channel_base = (np.arange(channels) * plane)[:, None, None, None]
        for lo in range(0, grad.shape[0], ROI_CHUNK):
            hi = min(lo + ROI_CHUNK, grad.shape[0])
            # every sample inherits 1/ratio^2 of its cell's gradient
            cell_grad = grad[lo:hi].transpose(1, 0, 2, 3) / float(ratio * ratio)
            sample_grad = np.repeat(np.repeat(cell_grad, ratio, axis=2), ratio, axis=3)
            for (ys, wy), (xs, wx) in self._corners(lo, hi):
                weight = wy[:, :, None] * wx[:, None, :]
                index = channel_base + (ys[:, :, None] * width + xs[:, None, :])[None]
                flat += np.bincount(
                    index.reshape(-1),
                    weights=(sample_grad * weight[None]).reshape(-1),
                    minlength=flat.size,
                )
        return (flat.reshape(channels, height, width),)


def map_boxes(
    boxes: np.ndarray,
    transform: ResizeTransform,
    feature_map: DenseFeatureMap,
    edges: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Page-pixel boxes to clamped feature-map boxes; rejects empty regions."""
    _, height, width = feature_map.shape
    rois = transform.apply(boxes).reshape(-1, 4) * feature_map.scale
    rois[:, [0, 2]] = np.clip(rois[:, [0, 2]], 0.0, width)
    rois[:, [1, 3]] = np.clip(rois[:, [1, 3]], 0.0, height)
    empty = (rois[:, 2] <= rois[:, 0]) | (rois[:, 3] <= rois[:, 1])
    if empty.any():
        k = int(np.flatnonzero(empty)[0])
        name = f"edge {k}"
        if edges is not None:
            name += f" ({edges[k][0]}, {edges[k][1]})"
        raise RegionError(f"{name}: pooling region has zero area after clamping")
    return rois


def roi_pool(
    feature_map: DenseFeatureMap,
    boxes: np.ndarray,
    transform: ResizeTransform,
    grid: Tuple[int, int] = (3, 16),
    ratio: int = 2,
    edges: Optional[np.ndarray] = None,
) -> Tensor:
    """Pool page-space boxes from a feature map into ``(E, C, gh, gw)``."""
    rois = map_boxes(boxes, transform, feature_map, edges)
    return RoIAlign.apply(feature_map.features, rois=rois, grid=grid, ratio=ratio)


class PageEmbedder(Module):
    """Backbone ConvNet over the resized page (ReLU between layers)."""

    def __init__(self, name: str, seed: int, config: ImageEmbedderConfig) -> None:
        super().__init__(name, seed)
        self.config = config
        channels = [1] + list(config.backbone_filters)
        self.layers = [
            Conv2d(
                self.child_name(f"conv{i}"),
                seed,
                channels[i],
                channels[i + 1],
                config.kernel_size,
                (stride, stride),
            )
            for i, stride in enumerate(config.backbone_strides)
        ]

    def __call__(self, raster: np.ndarray) -> DenseFeatureMap:
        size = self.config.input_size
        if raster.shape != (size, size):
            raise ValueError(f"page embedder expects {size}x{size}, got {raster.shape}")
        x = Tensor(raster.reshape(1, 1, size, size))
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.relu(x)
        _, channels, height, width = x.shape
        return DenseFeatureMap(
            F.reshape(x, (channels, height, width)), 1.0 / self.config.total_stride
        )


class Refiner(Module):
    """Second ConvNet over pooled grids, flattened per edge."""

    def __init__(self, name: str, seed: int, config: ImageEmbedderConfig) -> None:
        super().__init__(name, seed)
        channels = [config.backbone_filters[-1]] + list(config.refiner_filters)
        self.layers = [
            Conv2d(
                self.child_name(f"conv{i}"),
                seed,
                channels[i],
                channels[i + 1],
                config.kernel_size,
                stride,
            )
            for i, stride in enumerate(config.refiner_strides)
        ]

    def __call__(self, pooled: Tensor) -> Tensor:
        x = pooled
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.relu(x)
        return F.reshape(x, (x.shape[0], -1))


class EdgeImageEncoder(Module):
    """Page raster and edge union boxes to one feature vector per edge."""

    def __init__(self, name: str, seed: int, config: ImageEmbedderConfig) -> None:
        super().__init__(name, seed)
        self.config = config
        self.embedder = PageEmbedder(self.child_name("backbone"), seed, config)
        self.refiner = Refiner(self.child_name("refiner"), seed, config)

    @property
    def output_dim(self) -> int:
        return self.config.output_dim

    def __call__(
        self,
        raster: np.ndarray,
        transform: ResizeTransform,
        boxes: np.ndarray,
        edges: Optional[np.ndarray] = None,
    ) -> Tensor:
        boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        if boxes.shape[0] == 0:
            return Tensor(np.zeros((0, self.output_dim)))
        feature_map = self.embedder(raster)
        pooled = roi_pool(
            feature_map,
            boxes,
            transform,
            grid=(self.config.roi_height, self.config.roi_width),
            ratio=self.config.sampling_ratio,
            edges=edges,
        )
        features = self.refiner(pooled)
        logger.debug(
            f"Edge image features edges={boxes.shape[0]} dim={features.shape[1]}"
        )
        return features
