"""Self-organizing railway traffic management simulator."""

__version__ = "0.1.0"
