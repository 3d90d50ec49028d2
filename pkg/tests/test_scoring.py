"""Test closed-form scoring of complete and ancestrally closed data."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from scipy.special import gammaln

from selbayes.helpers import load_dataset
from selbayes.pyselbayes.exceptions import DataError, PriorError
from selbayes.pyselbayes.graph import canonical_encoding, markov_equivalent
from selbayes.pyselbayes.priors import BdeSpec, FamilyPrior, build_bde_prior
from selbayes.pyselbayes.scoring import (
    Dataset,
    PopulationSpec,
    SufficientCounts,
    log_ch_score,
    score_ancestral,
    tally_counts,
)

from .common import CONFIG, binary, dataset, prequential_log_score, selection, structure


def test_tally_counts() -> None:
    """Test counts over fully observed families."""
    root = structure([binary("X")])
    assert tally_counts(root, dataset(root.variables, [])).tables["X"].tolist() == [[0, 0]]
    counts = tally_counts(root, dataset(root.variables, [["T"], ["T"], ["F"]]))
    assert counts.tables["X"].tolist() == [[2, 1]]


def test_tally_counts_skip_partial_families() -> None:
    """Test a case missing a parent does not count toward the child."""
    net = structure([binary("X"), binary("Y")], ["X->Y"])
    counts = tally_counts(net, dataset(net.variables, [["T", "T"], ["?", "F"], ["F", "?"]]))
    assert counts.tables["X"].tolist() == [[1, 1]]
    assert counts.tables["Y"].tolist() == [[1, 0], [0, 0]]
    assert set(tally_counts(net, dataset(net.variables, []), {"Y"}).tables) == {"Y"}


def test_clinic_selected_counts(fatigue_clinic) -> None:
    """Test the three selected cases all have fatigue."""
    data = load_dataset(CONFIG / "clinic_cases.csv", fatigue_clinic.structure)
    counts = tally_counts(fatigue_clinic.structure, data)
    assert counts.tables["X4"][:, 0].sum() == 3
    assert counts.tables["X4"][:, 1].sum() == 0


def test_log_ch_score() -> None:
    """Test the closed form against hand values."""
    prior = FamilyPrior({"X": np.ones((1, 2))})
    empty = SufficientCounts({"X": np.zeros((1, 2))})
    assert log_ch_score(empty, prior).value == 0.0
    counts = SufficientCounts({"X": np.array([[2, 1]])})
    score = log_ch_score(counts, prior)
    assert score.value == pytest.approx(math.log(1 / 12), abs=1e-12)
    assert score.method == "ch"


def test_log_ch_score_decomposes() -> None:
    """Test independent variables score as the sum of their own scores."""
    net = structure([binary("X"), binary("Y")])
    data = dataset(net.variables, [["T", "F"], ["T", "T"], ["F", "F"], ["T", "F"]])
    prior = build_bde_prior(net, BdeSpec(1.0))
    total = log_ch_score(tally_counts(net, data), prior).value
    parts = [
        log_ch_score(tally_counts(net, data, {name}), prior).value for name in net.names
    ]
    assert total == pytest.approx(sum(parts), abs=1e-12)


def test_nonpositive_alpha_is_refused() -> None:
    """Test zero and infinite hyperparameters are refused when the prior is built."""
    with pytest.raises(PriorError, match=r"alpha 0\.0 at \[0, 1\], expected strictly positive"):
        FamilyPrior({"X": [[1.0, 0.0]]})
    with pytest.raises(PriorError, match="strictly positive"):
        FamilyPrior({"X": [[np.inf, 1.0]]})
    with pytest.raises(PriorError, match="shape"):
        log_ch_score(
            SufficientCounts({"X": np.array([[1, 0]])}), FamilyPrior({"X": [[1.0, 1.0, 1.0]]})
        )


def test_log_gamma_reference_values() -> None:
    """Test log-gamma accuracy at reference points."""
    assert gammaln(1e-3) == pytest.approx(math.lgamma(1e-3), rel=1e-12)
    assert gammaln(0.5) == pytest.approx(math.log(math.sqrt(math.pi)), rel=1e-12)
    assert gammaln(10.0) == pytest.approx(math.log(362880), rel=1e-12)
    assert gammaln(1e7) == pytest.approx(math.lgamma(1e7), rel=1e-12)


def test_prequential_consistency() -> None:
    """Test the closed form equals case-by-case predictive products."""
    rng = np.random.Generator(np.random.PCG64(21))
    for _ in range(20):
        net = structure(
            [binary("X"), binary("Y"), binary("Z")],
            [e for e in ("X->Y", "X->Z", "Y->Z") if rng.random() < 0.5],
        )
        tables = {
            name: rng.uniform(0.5, 2.0, size=(net.row_count(name), 2)) for name in net.names
        }
        rows = [rng.integers(0, 2, size=3).tolist() for _ in range(int(rng.integers(0, 8)))]
        data = Dataset(net.variables, np.array(rows, dtype=np.int64).reshape(-1, 3))
        closed = log_ch_score(tally_counts(net, data), FamilyPrior(tables)).value
        cases = [dict(zip(net.names, row, strict=True)) for row in rows]
        assert closed == pytest.approx(
            prequential_log_score(net, tables.__getitem__, cases), abs=1e-9
        )


def test_exchangeability() -> None:
    """Test case order never changes the score."""
    net = structure([binary("X"), binary("Y")], ["X->Y"])
    rows = [["T", "F"], ["T", "T"], ["F", "F"], ["F", "T"], ["T", "T"]]
    prior = build_bde_prior(net, BdeSpec(2.0))
    scores = {
        score_ancestral(net, prior, dataset(net.variables, order)).value
        for order in itertools.permutations(rows)
    }
    assert len(scores) == 1


def test_likelihood_equivalence() -> None:
    """Test Markov-equivalent structures score alike under one BDe prior."""
    rng = np.random.Generator(np.random.PCG64(200))
    variables = [binary("X"), binary("Y"), binary("Z")]
    rows = rng.integers(0, 2, size=(200, 3))
    data = Dataset(variables, rows)
    options = [(None, f"{a}->{b}", f"{b}->{a}") for a, b in itertools.combinations("XYZ", 2)]
    structures = []
    for choice in itertools.product(*options):
        edges = [edge for edge in choice if edge is not None]
        try:
            structures.append(structure(variables, edges))
        except ValueError:
            continue
    assert len(structures) == 25
    scores = {
        canonical_encoding(net): score_ancestral(
            net, build_bde_prior(net, BdeSpec(1.0)), data
        ).value
        for net in structures
    }
    for first, second in itertools.combinations(structures, 2):
        if markov_equivalent(first, second):
            assert scores[canonical_encoding(first)] == pytest.approx(
                scores[canonical_encoding(second)], abs=1e-9
            )


def test_score_ancestral() -> None:
    """Test closed scoring of ancestrally closed cases."""
    net = structure([binary("X"), selection()], ["X->S"])
    prior = build_bde_prior(net, BdeSpec(1.0))
    full = dataset(net.variables, [["T", "T"], ["F", "T"]])
    score = score_ancestral(net, prior, full)
    assert score.method == "direct"
    assert score.value == log_ch_score(tally_counts(net, full), prior).value

    # an S-root case observing only S adds just an S-family factor
    root = structure([binary("X"), selection()], ["S->X"])
    root_prior = build_bde_prior(root, BdeSpec(1.0))
    base = score_ancestral(root, root_prior, dataset(root.variables, [["T", "T"]])).value
    extended = score_ancestral(
        root, root_prior, dataset(root.variables, [["T", "T"], ["?", "F"]])
    ).value
    # S alpha (0.5, 0.5) after one T case: P(S=F) = 0.5 / 2
    assert extended - base == pytest.approx(math.log(0.25), abs=1e-12)


def test_score_ancestral_rejects_unclosed_cases() -> None:
    """Test a case observing a child without its parent is refused."""
    net = structure([binary("X"), binary("Y")], ["X->Y"])
    with pytest.raises(DataError, match="Case 1 is not ancestrally closed: Y .* parent X"):
        score_ancestral(
            net,
            build_bde_prior(net, BdeSpec(1.0)),
            dataset(net.variables, [["T", "T"], ["?", "T"]]),
        )


def test_monotone_dilution() -> None:
    """Test adding an S-only case lowers the score."""
    net = structure([binary("X"), selection()], ["S->X"])
    prior = build_bde_prior(net, BdeSpec(1.0))
    rows = [["T", "T"], ["F", "T"]]
    before = score_ancestral(net, prior, dataset(net.variables, rows)).value
    after = score_ancestral(net, prior, dataset(net.variables, [*rows, ["?", "F"]])).value
    assert after < before


def test_dataset_validation() -> None:
    """Test S may never be missing."""
    net = structure([binary("X"), selection()], ["X->S"])
    with pytest.raises(DataError, match="S never has a missing value"):
        dataset(net.variables, [["T", "?"]])
    data = dataset(net.variables, [["T", "T"], ["?", "F"]])
    assert data.records() == [{"X": "T", "S": "T"}, {"X": "?", "S": "F"}]


def test_population_spec() -> None:
    """Test population priors normalize and shift."""
    assert PopulationSpec.point(4).point_mass == 4
    mixture = PopulationSpec({1: 0.5, 2: 0.5})
    assert mixture.point_mass is None
    assert dict(mixture.shifted(2).m_f_prior) == {3: 0.5, 4: 0.5}
    with pytest.raises(DataError, match="sum to"):
        PopulationSpec({1: 0.5, 2: 0.4})
    with pytest.raises(DataError, match="Invalid m_F value"):
        PopulationSpec({-1: 1.0})
