"""Structured run reports."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
import json
from typing import Any

import numpy as np

from .pyselbayes.graph import Edge, NetworkStructure, canonical_encoding
from .pyselbayes.utils import format_number


def edge_list(edges: frozenset[Edge] | Sequence[Edge]) -> list[str]:
    """Return sorted 'parent->child' labels."""
    return [f"{parent}->{child}" for parent, child in sorted(edges)]


def structure_summary(structure: NetworkStructure) -> dict[str, Any]:
    """Return the reported view of a structure."""
    return {"edges": edge_list(structure.edges), "encoding": canonical_encoding(structure)}


def _plain(value: Any) -> Any:
    """Convert a value to JSON types, rounding floats to report precision."""
    match value:
        case bool() | None | str():
            return value
        case np.bool_():
            return bool(value)
        case int() | np.integer():
            return int(value)
        case float() | np.floating():
            return format_number(float(value))
        case Mapping():
            return {str(k): _plain(v) for k, v in value.items()}
        case np.ndarray():
            return _plain(value.tolist())
        case list() | tuple() | set() | frozenset():
            items = [_plain(v) for v in value]
            return sorted(items) if isinstance(value, (set, frozenset)) else items
    return str(value)


@dataclass
class RunReport:
    """What a command did, on which inputs, and what it found.

    Wall-clock time is recorded only on request so that reruns with the
    same inputs produce byte-identical reports.
    """

    command: list[str]
    inputs: dict[str, str] = field(default_factory=dict)
    methods: list[str] = field(default_factory=list)
    results: dict[str, Any] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)
    seed: int | None = None
    wall_clock: float | None = None

    def add_method(self, method: str) -> None:
        """Record a method tag once."""
        if method not in self.methods:
            self.methods.append(method)

    def as_dict(self) -> dict[str, Any]:
        """Return the report as plain JSON types."""
        report = {
            "command": self.command,
            "inputs": self.inputs,
            "methods": self.methods,
            "results": self.results,
            "diagnostics": self.diagnostics,
            "seed": self.seed,
        }
        if self.wall_clock is not None:
            report["wall_clock_seconds"] = self.wall_clock
        return _plain(report)

    def to_json(self) -> str:
        """Return the report as stable JSON text."""
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"
