"""Regularized multimodal fusion networks with learned feature and class relations."""

__version__ = "0.1.0"
