"""
speechreg

Regularized end-to-end speech recognition toolkit: audio augmentation,
spectrogram features, a convolutional + bidirectional GRU acoustic model
trained with CTC, and n-gram fused beam search decoding.
"""

__version__ = "1.0.0"
__description__ = "Data augmentation and dropout for end-to-end CTC speech recognition"
