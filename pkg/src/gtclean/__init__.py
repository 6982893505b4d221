"""Multi-level ground-truth cleaning for crop classification."""

__version__ = "0.1.0"
