"""Hierarchical multi-task policies with a stochastic temporal grammar."""
__version__ = "0.1.0"
