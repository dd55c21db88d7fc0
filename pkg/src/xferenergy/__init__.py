"""Energy-aware mobile data transfer toolkit."""

__version__ = "0.1.0"
