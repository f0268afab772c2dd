"""Localized BMO/BLO norms, square functions and metric-measure geometry on grids."""

__version__ = "0.1.0"
