"""Record-linkage risk evaluation: extract, search, reason and calibrate matchers plus classical baselines."""

__version__ = "0.1.0"
