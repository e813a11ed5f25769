"""Achievability bounds and simulations for linear codes with sparse random
generating matrices over the binary symmetric and binary erasure channels."""

__version__ = "0.1.0"
