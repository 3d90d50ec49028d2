"""Test family prior construction and validation."""

from __future__ import annotations

import numpy as np
import pytest

from selbayes.pyselbayes.exceptions import PriorError
from selbayes.pyselbayes.graph import GeneratingNetwork
from selbayes.pyselbayes.priors import (
    BdeSpec,
    FamilyPrior,
    PriorMode,
    PriorModel,
    SelectionPriorSpec,
    SelectionTable,
    build_bde_prior,
    build_selection_prior,
    validate_prior,
)

from .common import binary, selection, structure


def test_uniform_bde() -> None:
    """Test a uniform P0 spreads the sample size over each family table."""
    root = structure([binary("X")])
    assert build_bde_prior(root, BdeSpec(1.0)).alpha("X") == pytest.approx([[0.5, 0.5]])
    pair = structure([binary("X"), binary("Y")], ["X->Y"])
    np.testing.assert_allclose(build_bde_prior(pair, BdeSpec(4.0)).alpha("Y"), np.ones((2, 2)))


def test_bde_from_prior_network() -> None:
    """Test alpha = ess * P0(child, parents)."""
    net = structure([binary("X"), binary("Y")], ["X->Y"])
    prior_joint = GeneratingNetwork(
        net, {"X": [[0.2, 0.8]], "Y": [[0.9, 0.1], [0.5, 0.5]]}
    )
    alpha = build_bde_prior(net, BdeSpec(10.0, prior_joint)).alpha("Y")
    np.testing.assert_allclose(alpha[0], [1.8, 0.2])
    np.testing.assert_allclose(alpha[1], [4.0, 4.0])

    # the model may place Y above X; P0 is still read from the prior network
    reversed_net = structure([binary("X"), binary("Y")], ["Y->X"])
    alpha = build_bde_prior(reversed_net, BdeSpec(10.0, prior_joint)).alpha("X")
    np.testing.assert_allclose(alpha, [[1.8, 4.0], [0.2, 4.0]])


def test_bde_impossible_configuration() -> None:
    """Test zero-probability parent configurations are rejected."""
    net = structure([binary("X"), binary("Y")], ["X->Y"])
    prior_joint = GeneratingNetwork(net, {"X": [[1.0, 0.0]], "Y": [[0.5, 0.5], [0.5, 0.5]]})
    with pytest.raises(PriorError, match="undefined for impossible configuration"):
        build_bde_prior(net, BdeSpec(1.0, prior_joint))


def test_bde_validation() -> None:
    """Test the sample size must be positive."""
    with pytest.raises(PriorError):
        BdeSpec(0.0)


def selection_spec(means: list[list[float]], ess: float = 1.0) -> SelectionPriorSpec:
    """Return a spec over parent X4 covering m_F = 4."""
    return SelectionPriorSpec(("X4",), {4: SelectionTable(means, ess)})


def test_selection_prior() -> None:
    """Test S-family tables for a covered m_F."""
    net = structure([binary("X4"), selection()], ["X4->S"])
    alpha = build_selection_prior(net, selection_spec([[0.9, 0.1], [0.01, 0.99]]), 4)
    np.testing.assert_allclose(alpha.alpha("S"), [[0.9, 0.1], [0.01, 0.99]])

    uniform = build_selection_prior(net, selection_spec([[0.5, 0.5], [0.5, 0.5]], 2.0), 4)
    np.testing.assert_allclose(uniform.alpha("S"), np.ones((2, 2)))

    with pytest.raises(PriorError, match="strictly positive"):
        selection_spec([[1.0, 0.0], [1.0, 0.0]])


def test_selection_prior_coverage() -> None:
    """Test an uncovered m_F names the covered candidates."""
    net = structure([binary("X4"), selection()], ["X4->S"])
    with pytest.raises(PriorError, match=r"covered: \[4\]"):
        build_selection_prior(net, selection_spec([[0.9, 0.1], [0.01, 0.99]]), 3)
    with pytest.raises(PriorError, match="sum to 1"):
        SelectionTable([[0.9, 0.2]], 1.0)


def test_selection_prior_parent_order() -> None:
    """Test rows declared over another parent order are mapped onto the structure's."""
    net = structure([binary("A"), binary("B"), selection()], ["A->S", "B->S"])
    means = [[0.1, 0.9], [0.2, 0.8], [0.3, 0.7], [0.4, 0.6]]
    spec = SelectionPriorSpec(("B", "A"), {0: SelectionTable(means, 1.0)})
    alpha = build_selection_prior(net, spec, 0).alpha("S")
    # structure row (A, B) = (T, F) is declared row (B, A) = (F, T)
    np.testing.assert_allclose(alpha[1], means[2])
    np.testing.assert_allclose(alpha[2], means[1])


def test_validate_prior() -> None:
    """Test diagnostics name the variable, row and state."""
    net = structure([binary("X"), binary("Y")], ["X->Y"])
    assert validate_prior({"X": np.ones((1, 2)), "Y": np.ones((2, 2))}, net) == []

    diagnostics = validate_prior({"X": [[1.0, 0.0]], "Y": np.ones((1, 2))}, net)
    assert [str(d) for d in diagnostics] == [
        "X[row 0, state F]: alpha 0.0 is not strictly positive and finite",
        "Y: 1 parent-configuration rows, expected 2",
    ]


def test_prior_model_modes() -> None:
    """Test each mode supplies family tables."""
    net = structure([binary("X"), binary("Y")], ["X->Y"])
    assert PriorModel().likelihood_equivalent
    k2 = PriorModel(mode=PriorMode.K2, alpha=2.0)
    np.testing.assert_allclose(k2.family_alpha(net, "Y", None), np.full((2, 2), 2.0))
    assert not k2.likelihood_equivalent
    explicit = PriorModel(mode=PriorMode.EXPLICIT, tables={"X": [[1.0, 2.0]]})
    np.testing.assert_allclose(explicit.family_alpha(net, "X", None), [[1.0, 2.0]])
    with pytest.raises(PriorError, match="expected"):
        explicit.family_alpha(net, "Y", None)
    with pytest.raises(PriorError, match="strictly positive"):
        PriorModel(mode=PriorMode.EXPLICIT, tables={"X": [[1.0, 0.0]]})
    with pytest.raises(PriorError, match="needs tables"):
        PriorModel(mode=PriorMode.EXPLICIT)
