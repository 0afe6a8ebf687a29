"""Economic complexity, product space and export-structure inequality (Xgini)."""

__version__ = "0.1.0"
