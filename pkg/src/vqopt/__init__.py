"""Noisy variational circuit optimization: simulator, oracles, optimizers and diagnostics."""

__version__ = "0.1.0"
