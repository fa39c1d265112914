"""Generative-agent laboratory for home-battery arbitrage."""

__version__ = "0.1.0"
