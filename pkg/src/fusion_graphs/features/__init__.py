"""Wavelet sub-band and tabular feature extraction."""
