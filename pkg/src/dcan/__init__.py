"""Dilated convolutional attention network for multi-label document coding."""

__version__ = "0.1.0"
