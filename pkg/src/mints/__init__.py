"""Multiple imputation for nonlinear hierarchical time series (MINTS)."""

__version__ = "0.1.0"
