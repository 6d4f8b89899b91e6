"""Datasets, rasters, vocabulary, MLM sampling and the synthetic generator."""
