"""Self-adaptive synchronous-transmission flooding lab."""

__version__ = "0.1.0"
