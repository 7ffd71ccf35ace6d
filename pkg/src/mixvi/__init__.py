"""Variational and Gibbs inference for finite mixtures of mixed-type data."""

__version__ = "0.1.0"
