"""Uncertainty-oriented order learning with Gaussian embeddings and Bradley-Terry scoring."""

__version__ = "0.1.0"
