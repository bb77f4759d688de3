"""Look-ahead elevator group scheduling and a deterministic bank simulator."""

__version__ = "0.1.0"
