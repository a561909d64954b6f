"""Randomness amplification from Santha-Vazirani sources with chained Bell tests: bounds, attack LP and simulation."""

__version__ = "0.1.0"
