"""Gauge-covariant wave optics of charged particles."""

__version__ = "0.1.0"
