"""Numerical diagnostics for conformal maps, quasiconformal reflections and dyadic curve statistics."""

__version__ = "0.1.0"
