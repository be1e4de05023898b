"""partldp - partitioning classification with and without local differential privacy."""

__version__ = "0.1.0"
__all__ = ["__version__"]
