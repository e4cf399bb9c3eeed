"""Topology-aware graph pooling networks for graph classification."""

__version__ = "0.1.0"
