"""Multimodal graph-contrastive form understanding: graphs, Rich Attention, GCL."""

__version__ = "0.1.0"
