"""Arc reversal, the S-as-root tree fast path and the BIC heuristic."""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import TYPE_CHECKING

import networkx as nx
import numpy as np
from scipy.special import xlogy

from .const import DEFAULT_BUDGET
from .exceptions import DataError, MethodUnavailableError, StructureError
from .graph import (
    Edge,
    NetworkStructure,
    Role,
    ancestors,
    is_tree,
    parameter_count,
    topological_order,
)
from .scoring import LogScore, check_ancestral_closure, family_cells, family_log_score

if TYPE_CHECKING:
    from .selection import SelectionProblem

_LOGGER = logging.getLogger(__name__)


def _still_rooted(structure: NetworkStructure, edges: set[Edge]) -> bool:
    if not structure.manipulation_rooted:
        return False
    for variable in structure.variables:
        if variable.role is not Role.MANIPULATION:
            continue
        if (variable.name, variable.target) not in edges:
            return False
        if any(child == variable.name for _, child in edges):
            return False
    return True


def reverse_arc(structure: NetworkStructure, parent: str, child: str) -> NetworkStructure:
    """Reverse parent->child, each endpoint inheriting the other's parents.

    A reversal that moves a manipulation variable off its root position
    returns a structure with the manipulation constraint lifted.
    """
    if (parent, child) not in structure.edges:
        raise StructureError(f"Edge {parent}->{child} is not in the structure")
    graph = nx.DiGraph(structure.graph)
    graph.remove_edge(parent, child)
    if nx.has_path(graph, parent, child):
        path = nx.shortest_path(graph, parent, child)
        raise StructureError(
            f"Reversing {parent}->{child} would create a cycle through {' -> '.join(path)}"
        )
    edges = set(structure.edges)
    edges.discard((parent, child))
    edges.add((child, parent))
    edges.update((p, parent) for p in structure.parents(child) if p != parent)
    edges.update((p, child) for p in structure.parents(parent))
    return NetworkStructure(
        structure.variables, frozenset(edges), _still_rooted(structure, edges)
    )


@dataclass(frozen=True)
class ReversalPlan:
    """Reversals that make S a root, and the structure they produce."""

    original: NetworkStructure
    reversed_edges: tuple[Edge, ...]
    result: NetworkStructure
    tree_valid: bool

    def apply(self, structure: NetworkStructure | None = None) -> NetworkStructure:
        """Replay the reversals on a structure, the original by default."""
        structure = self.original if structure is None else structure
        for parent, child in self.reversed_edges:
            structure = reverse_arc(structure, parent, child)
        return structure


def make_s_root(structure: NetworkStructure) -> ReversalPlan:
    """Return the reversals that make the selection variable a root.

    When S and its ancestors form a chain, arcs are reversed from the top of
    the chain down so the result is again a chain, rooted at S. Otherwise
    arcs into S are reversed one at a time, taking the first parent in
    declaration order that has no other directed route to S.
    """
    if (selection := structure.selection) is None:
        raise StructureError("Structure has no selection variable")
    name = selection.name
    chain = ancestors(structure, name)
    tree_valid = is_tree(structure, chain | {name})
    reversed_edges: list[Edge] = []
    current = structure

    if tree_valid:
        for node in topological_order(structure):
            if node not in chain:
                continue
            child = next(c for c in structure.children(node) if c == name or c in chain)
            current = reverse_arc(current, node, child)
            reversed_edges.append((node, child))
    else:
        while parents := current.parents(name):
            graph = current.graph
            for parent in parents:
                others = [p for p in graph.successors(parent) if p != name]
                if not any(nx.has_path(graph, other, name) for other in others):
                    break
            else:  # pragma: no cover
                raise StructureError(f"No reversible arc into {name}")
            current = reverse_arc(current, parent, name)
            reversed_edges.append((parent, name))

    _LOGGER.debug("Reversed %s to make %s a root", reversed_edges, name)
    return ReversalPlan(structure, tuple(reversed_edges), current, tree_valid)


def _problem_m_f(problem: SelectionProblem, m_F: int | None) -> int:
    if m_F is None and (m_F := problem.population.point_mass) is None:
        raise MethodUnavailableError("This method needs a point-mass population prior")
    if m_F < 0:
        raise ValueError(f"Invalid m_F specified: {m_F}")
    return int(m_F)


def _root_counts(
    problem: SelectionProblem, structure: NetworkStructure, m_F: int
) -> dict[str, np.ndarray]:
    """Tally sampled cases in an S-root structure, adding m_F unsampled S observations."""
    values = problem.values
    check_ancestral_closure(structure, values)
    counts = {}
    for name in structure.names:
        cells = family_cells(structure, values, name)
        shape = (structure.row_count(name), structure.arity(name))
        counts[name] = np.bincount(cells[cells >= 0], minlength=shape[0] * shape[1]).reshape(
            shape
        ).astype(float)
    selection = structure.selection
    counts[selection.name][0, selection.unsampled_index] += m_F
    return counts


def tree_fastpath_score(
    problem: SelectionProblem, budget: int = DEFAULT_BUDGET, *, m_F: int | None = None
) -> LogScore:
    """Score the S-root reversal of a tree-shaped ancestor set in closed form.

    Markov-equivalent structures share their BDe marginal likelihood, so the
    reversed structure's direct score is the original's exact score.
    """
    if not problem.prior.likelihood_equivalent:
        raise MethodUnavailableError("fast path requires likelihood-equivalent priors")
    plan = make_s_root(problem.structure)
    if not plan.tree_valid:
        raise MethodUnavailableError(
            "fast path requires S and its ancestors to form a tree"
        )
    structure = plan.result
    if structure.latent_names:
        raise MethodUnavailableError("fast path does not sum over latent variables")
    m_F = _problem_m_f(problem, m_F)
    try:
        counts = _root_counts(problem, structure, m_F)
    except DataError as err:
        raise MethodUnavailableError(f"fast path unavailable: {err}") from err
    total = math.fsum(
        float(family_log_score(problem.prior.family_alpha(structure, name, m_F), table))
        for name, table in counts.items()
    )
    return LogScore(total, "tree")


@dataclass(frozen=True)
class BicScore:
    """BIC heuristic: likelihood of the reversed fit, penalty of the original."""

    log_likelihood: float
    param_count: int
    bic: float
    sample_size: int
    structure: NetworkStructure
    diagnostics: tuple[str, ...] = ()


def bic_heuristic_score(problem: SelectionProblem, m_F: int | None = None) -> BicScore:
    """Fit relative-frequency ML tables to the S-root reversal and score by BIC.

    The penalty uses the original structure's parameter count and the total
    population size m_T + m_F.
    """
    m_F = _problem_m_f(problem, m_F)
    plan = make_s_root(problem.structure)
    structure = plan.result
    counts = _root_counts(problem, structure, m_F)
    log_likelihood = 0.0
    diagnostics = []
    for name, table in counts.items():
        rows = table.sum(axis=1, keepdims=True)
        for row in np.nonzero(rows[:, 0] == 0)[0]:
            diagnostics.append(f"{name} row {int(row)} has no observations")
        fitted = np.divide(table, rows, out=np.zeros_like(table), where=rows > 0)
        log_likelihood += float(xlogy(table, fitted).sum())
    param_count = parameter_count(problem.structure)
    sample_size = problem.m_T + m_F
    penalty = 0.5 * param_count * math.log(sample_size) if sample_size else 0.0
    _LOGGER.debug(
        "BIC on %s: log-likelihood %s, %s parameters, N=%s",
        plan.reversed_edges,
        log_likelihood,
        param_count,
        sample_size,
    )
    return BicScore(
        log_likelihood,
        param_count,
        log_likelihood - penalty,
        sample_size,
        structure,
        tuple(diagnostics),
    )
