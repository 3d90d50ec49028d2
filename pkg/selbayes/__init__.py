"""Bayesian scoring and discovery of causal networks from selected data."""

from __future__ import annotations

from .cli import execute, main
from .helpers import load_dataset, load_network_spec

__all__ = ["execute", "load_dataset", "load_network_spec", "main"]
