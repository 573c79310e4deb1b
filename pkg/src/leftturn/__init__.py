"""Game-theoretic model of unprotected left turns with bounded rationality."""

__version__ = "0.1.0"
