"""Congestion games with linearly non-separable costs, reward-inaction learning
and a smart-charging instantiation on a bus-injection power-flow model."""

__version__ = "0.1.0"
