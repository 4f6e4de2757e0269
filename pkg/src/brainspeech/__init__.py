"""Contrastive decoding of speech segments from multichannel brain recordings."""

__version__ = "0.1.0"
