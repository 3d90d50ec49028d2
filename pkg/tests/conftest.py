"""Fixtures for selbayes tests."""

from __future__ import annotations

import pytest

from selbayes.helpers import NetworkSpec, load_network_spec
from selbayes.pyselbayes.graph import NetworkStructure

from .common import binary, selection, structure


@pytest.fixture
def chain() -> NetworkStructure:
    """X1 -> X2 -> S."""
    return structure([binary("X1"), binary("X2"), selection()], ["X1->X2", "X2->S"])


@pytest.fixture
def collider() -> NetworkStructure:
    """X -> S <- Y."""
    return structure([binary("X"), binary("Y"), selection()], ["X->S", "Y->S"])


@pytest.fixture
def fatigue_clinic() -> NetworkSpec:
    """Five binary symptoms, S a child of X4."""
    return load_network_spec("builtin:fatigue_clinic")


@pytest.fixture
def b_prime() -> NetworkSpec:
    """Two independent causes of X4, S a child of X4."""
    return load_network_spec("builtin:b_prime")
