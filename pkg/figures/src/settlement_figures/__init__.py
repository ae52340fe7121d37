"""Render settlement-campaign figures from a CSV bundle.

The package is a pure renderer: it reads the CSV files the campaign
driver emits (merit survey, speed profile, star positions, generation
snapshots, cumulative counts) and draws them.  It never recomputes any
physics — if a number is not in the bundle, it does not appear in a
figure.
"""

from .bundle import Bundle, BundleError, load_bundle
from .plots import plot_all

__version__ = "0.1.0"

__all__ = ["Bundle", "BundleError", "load_bundle", "plot_all", "__version__"]
