"""Numerical substrate: tensors, autodiff, layers and the optimizer."""
