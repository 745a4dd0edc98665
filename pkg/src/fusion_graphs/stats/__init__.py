"""Discrete distributions, quantization and information measures."""
