"""Malicious JavaScript detection with cluster-aware graph learning."""

__version__ = "0.1.0"
