"""Encoder-decoder ReLU network forecasting toolkit."""

__version__ = "0.1.0"
