"""Multi-sensor drone detection and tracking engine."""

__version__ = "0.1.0"
