"""Numerical core: autodiff substrate and the model components built on it."""
