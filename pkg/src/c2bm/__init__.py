"""Causal concept bottleneck pipeline: data synthesis, discovery, training,
interventions, and serving."""

__version__ = "0.1.0"
