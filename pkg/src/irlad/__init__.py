"""Trajectory anomaly detection via bootstrapped-ensemble maximum-entropy
inverse reinforcement learning."""

__version__ = "0.1.0"
