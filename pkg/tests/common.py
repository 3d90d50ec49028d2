"""Builders and independent oracles shared by the tests."""

from __future__ import annotations

from collections.abc import Callable, Iterable, Sequence
import itertools
import math
from pathlib import Path

import networkx as nx
import numpy as np

from selbayes.pyselbayes.graph import NetworkStructure, Role, VariableSpec
from selbayes.pyselbayes.priors import BdeSpec, PriorMode, PriorModel
from selbayes.pyselbayes.scoring import Dataset, PopulationSpec
from selbayes.pyselbayes.selection import SelectionProblem

CONFIG = Path(__file__).parent.parent / "config"


def binary(name: str, **kwargs) -> VariableSpec:
    """Return a T/F domain variable."""
    return VariableSpec(name=name, states=("T", "F"), **kwargs)


def selection(states: Sequence[str] = ("T", "F"), unsampled: str | None = None) -> VariableSpec:
    """Return a selection variable named S."""
    return VariableSpec(name="S", states=tuple(states), role=Role.SELECTION, unsampled=unsampled)


def structure(variables: Sequence[VariableSpec], edges: Iterable[str] = ()) -> NetworkStructure:
    """Return a structure from 'A->B' edge labels."""
    return NetworkStructure(
        tuple(variables), frozenset(tuple(edge.split("->")) for edge in edges)
    )


def dataset(variables: Sequence[VariableSpec], rows: Iterable[Sequence[str]]) -> Dataset:
    """Return a dataset from rows of labels in declaration order."""
    names = [v.name for v in variables]
    return Dataset.from_records(variables, [dict(zip(names, row, strict=True)) for row in rows])


def problem(
    net: NetworkStructure,
    rows: Iterable[Sequence[str]],
    m_F: int | dict[int, float],
    prior: PriorModel | None = None,
) -> SelectionProblem:
    """Return a selection problem over labelled sampled rows."""
    population = PopulationSpec.point(m_F) if isinstance(m_F, int) else PopulationSpec(m_F)
    return SelectionProblem(
        net, prior or PriorModel(), dataset(net.variables, rows), population
    )


def random_dag(
    rng: np.random.Generator, names: Sequence[str], density: float = 0.5
) -> set[tuple[str, str]]:
    """Return random edges consistent with a random order."""
    order = [names[i] for i in rng.permutation(len(names))]
    return {
        (order[i], order[j])
        for i, j in itertools.combinations(range(len(order)), 2)
        if rng.random() < density
    }


def random_tree(rng: np.random.Generator, size: int) -> NetworkStructure:
    """Return a random directed tree whose edges point away from a random root."""
    names = [f"V{i}" for i in range(size)]
    undirected = nx.random_labeled_tree(size, seed=int(rng.integers(2**31)))
    root = int(rng.integers(size))
    edges = {(names[u], names[v]) for u, v in nx.bfs_edges(undirected, root)}
    return structure([binary(name) for name in names], [f"{p}->{c}" for p, c in edges])


def random_problem(seed: int) -> SelectionProblem:
    """Return a small random problem with explicit priors and binary variables."""
    rng = np.random.Generator(np.random.PCG64(seed))
    domain = [f"X{i}" for i in range(1, int(rng.integers(1, 5)) + 1)]
    variables = [binary(name) for name in domain] + [selection()]
    net = NetworkStructure(tuple(variables), frozenset(random_dag(rng, [*domain, "S"])))
    tables = {
        name: rng.uniform(0.5, 2.0, size=(net.row_count(name), net.arity(name)))
        for name in net.names
    }
    prior = PriorModel(mode=PriorMode.EXPLICIT, tables=tables)
    m_T = int(rng.integers(0, 6))
    rows = [
        [*("T" if rng.random() < 0.5 else "F" for _ in domain), "T"] for _ in range(m_T)
    ]
    return problem(net, rows, int(rng.integers(0, 4)), prior)


def random_tree_problem(seed: int) -> SelectionProblem:
    """Return a problem whose S and ancestors form a chain, under BDe priors."""
    rng = np.random.Generator(np.random.PCG64(seed))
    domain = [f"X{i}" for i in range(1, int(rng.integers(2, 5)) + 1)]
    depth = int(rng.integers(1, len(domain) + 1))
    chain = [domain[i] for i in rng.permutation(len(domain))[:depth]]
    edges = {(a, b) for a, b in itertools.pairwise(chain)} | {(chain[-1], "S")}
    others = [name for name in domain if name not in chain]
    for name in others:
        if rng.random() < 0.7:
            edges.add((chain[int(rng.integers(0, len(chain)))], name))
    variables = [binary(name) for name in domain] + [selection()]
    net = NetworkStructure(tuple(variables), frozenset(edges))
    m_T = int(rng.integers(1, 6))
    rows = [
        [*("T" if rng.random() < 0.5 else "F" for _ in domain), "T"] for _ in range(m_T)
    ]
    prior = PriorModel(bde=BdeSpec(float(rng.uniform(0.5, 4.0))))
    return problem(net, rows, int(rng.integers(0, 4)), prior)


def prequential_log_score(
    net: NetworkStructure,
    alpha_of: Callable[[str], np.ndarray],
    cases: Iterable[dict[str, int]],
) -> float:
    """Score cases one at a time by their predictive probabilities.

    Each case assigns state indices to the variables it observes; a family
    contributes only when the variable and all its parents are observed.
    """
    counts: dict[tuple[str, int, int], float] = {}
    total = 0.0
    for case in cases:
        for name in net.names:
            parents = net.parents(name)
            if name not in case or any(p not in case for p in parents):
                continue
            row = 0
            for parent in parents:
                row = row * net.arity(parent) + case[parent]
            alpha = alpha_of(name)
            row_alpha = float(alpha[row].sum())
            row_count = sum(counts.get((name, row, k), 0.0) for k in range(net.arity(name)))
            cell = (name, row, case[name])
            total += math.log(
                (alpha[row, case[name]] + counts.get(cell, 0.0)) / (row_alpha + row_count)
            )
        for name in net.names:
            parents = net.parents(name)
            if name not in case or any(p not in case for p in parents):
                continue
            row = 0
            for parent in parents:
                row = row * net.arity(parent) + case[parent]
            counts[(name, row, case[name])] = counts.get((name, row, case[name]), 0.0) + 1
    return total


def brute_force_log_score(p: SelectionProblem, m_F: int) -> float:
    """Sum the complete-population score over every completion of the unsampled cases."""
    net = p.structure
    s = p.selection
    alpha_of = lambda name: p.prior.family_alpha(net, name, m_F)  # noqa: E731
    sampled = [
        {name: int(v) for name, v in zip(net.names, row, strict=True) if v >= 0}
        for row in p.values.tolist()
    ]
    free = [name for name in net.names if name != s.name]
    terms = []
    for completion in itertools.product(
        *(itertools.product(*(range(net.arity(n)) for n in free)) for _ in range(m_F))
    ):
        unsampled = [
            {**dict(zip(free, states, strict=True)), s.name: s.unsampled_index}
            for states in completion
        ]
        terms.append(prequential_log_score(net, alpha_of, sampled + unsampled))
    peak = max(terms)
    return peak + math.log(math.fsum(math.exp(t - peak) for t in terms))
