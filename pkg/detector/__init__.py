"""Energy-trace detector for microarchitectural attacks."""

__version__ = "1.0.0"
