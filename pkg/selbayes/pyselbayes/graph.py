"""Causal network structures, graph queries and exact inference."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import StrEnum
import logging
import math
from types import MappingProxyType

import networkx as nx
import numpy as np

from .const import (
    CPT_TOLERANCE,
    ENUMERATION_CAP,
    MISSING_LABEL,
    NOT_EXPERIMENTAL,
    RESERVED_CHARACTERS,
    UNSAMPLED_LABELS,
)
from .exceptions import CycleError, InferenceError, StructureError
from .utils import config_index, stable_hash

_LOGGER = logging.getLogger(__name__)

type Edge = tuple[str, str]
type CaseAssignment = Mapping[str, str]


def _label_problem(label: str) -> str | None:
    if not label or label != label.strip():
        return "is empty or has surrounding whitespace"
    if label == MISSING_LABEL:
        return f"is the missing-value marker '{MISSING_LABEL}'"
    if reserved := sorted(RESERVED_CHARACTERS.intersection(label)):
        return f"contains reserved characters {reserved}"
    return None


class Role(StrEnum):
    """Role of a variable in a network."""

    DOMAIN = "domain"
    SELECTION = "selection"
    MANIPULATION = "manipulation"


@dataclass(frozen=True, kw_only=True)
class VariableSpec:
    """A discrete variable: name, role and ordered states."""

    name: str
    states: tuple[str, ...]
    role: Role = Role.DOMAIN
    latent: bool = False
    target: str | None = None
    unsampled: str | None = None

    def __post_init__(self) -> None:
        """Validate the declaration and resolve the unsampled state."""
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "role", Role(self.role))
        if not self.name or _label_problem(self.name):
            raise StructureError(f"Invalid variable name specified: '{self.name}'")
        if len(self.states) < 2:
            raise StructureError(f"Variable {self.name} needs at least two states")
        if len(set(self.states)) != len(self.states):
            raise StructureError(f"Variable {self.name} has duplicate state labels")
        for state in self.states:
            if problem := _label_problem(state):
                raise StructureError(f"Variable {self.name} state '{state}' {problem}")
        if self.latent and self.role is not Role.DOMAIN:
            raise StructureError(f"Only domain variables may be latent: {self.name}")
        if self.role is Role.MANIPULATION:
            if not self.target:
                raise StructureError(f"Manipulation variable {self.name} needs a target")
            if NOT_EXPERIMENTAL not in self.states:
                raise StructureError(
                    f"Manipulation variable {self.name} needs the state '{NOT_EXPERIMENTAL}'"
                )
        elif self.target is not None:
            raise StructureError(f"Only manipulation variables have a target: {self.name}")
        if self.role is Role.SELECTION:
            unsampled = self.unsampled or next(
                (label for label in UNSAMPLED_LABELS if label in self.states), None
            )
            if unsampled not in self.states:
                raise StructureError(
                    f"Selection variable {self.name} must declare its unsampled state"
                )
            object.__setattr__(self, "unsampled", unsampled)
        elif self.unsampled is not None:
            raise StructureError(f"Only the selection variable has an unsampled state: {self.name}")

    @property
    def arity(self) -> int:
        """Return the number of states."""
        return len(self.states)

    @property
    def unsampled_index(self) -> int:
        """Return the index of the unsampled state."""
        if self.unsampled is None:
            raise StructureError(f"{self.name} is not a selection variable")
        return self.states.index(self.unsampled)

    @property
    def sampled_states(self) -> tuple[str, ...]:
        """Return the states marking sampled cases."""
        return tuple(state for state in self.states if state != self.unsampled)

    def index(self, state: str) -> int:
        """Return the index of a state label."""
        try:
            return self.states.index(state)
        except ValueError:
            raise StructureError(
                f"Invalid state '{state}' specified for variable {self.name}"
            ) from None


@dataclass(frozen=True)
class NetworkStructure:
    """A DAG over declared variables."""

    variables: tuple[VariableSpec, ...]
    edges: frozenset[Edge] = frozenset()
    manipulation_rooted: bool = True
    _graph: nx.DiGraph = field(init=False, repr=False, compare=False, hash=False)
    _position: Mapping[str, int] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        """Validate the structure."""
        variables = tuple(self.variables)
        edges = frozenset((str(p), str(c)) for p, c in self.edges)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "edges", edges)

        position: dict[str, int] = {}
        for i, variable in enumerate(variables):
            if variable.name in position:
                raise StructureError(f"Duplicate variable: {variable.name}")
            position[variable.name] = i
        object.__setattr__(self, "_position", MappingProxyType(position))

        for parent, child in sorted(edges):
            for name in (parent, child):
                if name not in position:
                    raise StructureError(f"Edge {parent}->{child} names undeclared variable {name}")
            if parent == child:
                raise StructureError(f"Self-loop on {parent}")

        graph = nx.DiGraph()
        graph.add_nodes_from(position)
        graph.add_edges_from(sorted(edges))
        try:
            cycle = nx.find_cycle(graph)
        except nx.NetworkXNoCycle:
            pass
        else:
            raise CycleError([(str(u), str(v)) for u, v, *_ in cycle])
        object.__setattr__(self, "_graph", nx.freeze(graph))

        selection = [v.name for v in variables if v.role is Role.SELECTION]
        if len(selection) > 1:
            raise StructureError(f"At most one selection variable allowed: {selection}")

        for variable in variables:
            if variable.role is not Role.MANIPULATION:
                continue
            target = position.get(variable.target)
            if target is None:
                raise StructureError(
                    f"Manipulation variable {variable.name} targets undeclared {variable.target}"
                )
            target_spec = variables[target]
            if target_spec.role is not Role.DOMAIN:
                raise StructureError(f"{variable.name} must target a domain variable")
            if variable.states != (*target_spec.states, NOT_EXPERIMENTAL):
                raise StructureError(
                    f"States of {variable.name} must be those of {target_spec.name} plus "
                    f"'{NOT_EXPERIMENTAL}'"
                )
            if self.manipulation_rooted:
                if (variable.name, target_spec.name) not in edges:
                    raise StructureError(
                        f"Missing edge {variable.name}->{target_spec.name} for manipulation"
                    )
                if any(graph.predecessors(variable.name)):
                    raise StructureError(f"Manipulation variable {variable.name} has parents")

    @property
    def graph(self) -> nx.DiGraph:
        """Return the frozen graph."""
        return self._graph

    @property
    def names(self) -> tuple[str, ...]:
        """Return variable names in declaration order."""
        return tuple(v.name for v in self.variables)

    @property
    def selection(self) -> VariableSpec | None:
        """Return the selection variable, if any."""
        return next((v for v in self.variables if v.role is Role.SELECTION), None)

    @property
    def domain_names(self) -> tuple[str, ...]:
        """Return the names of domain variables."""
        return tuple(v.name for v in self.variables if v.role is Role.DOMAIN)

    @property
    def latent_names(self) -> tuple[str, ...]:
        """Return the names of latent variables."""
        return tuple(v.name for v in self.variables if v.latent)

    def position(self, name: str) -> int:
        """Return the declaration index of a variable."""
        try:
            return self._position[name]
        except KeyError:
            raise StructureError(f"Unknown variable: {name}") from None

    def variable(self, name: str) -> VariableSpec:
        """Return a variable declaration."""
        return self.variables[self.position(name)]

    def arity(self, name: str) -> int:
        """Return the arity of a variable."""
        return self.variable(name).arity

    def parents(self, name: str) -> tuple[str, ...]:
        """Return the parents of a variable in declaration order."""
        self.position(name)
        return tuple(sorted(self._graph.predecessors(name), key=self._position.__getitem__))

    def children(self, name: str) -> tuple[str, ...]:
        """Return the children of a variable in declaration order."""
        self.position(name)
        return tuple(sorted(self._graph.successors(name), key=self._position.__getitem__))

    def parent_arities(self, name: str) -> tuple[int, ...]:
        """Return the arities of a variable's parents."""
        return tuple(self.arity(parent) for parent in self.parents(name))

    def row_count(self, name: str) -> int:
        """Return the number of parent configurations of a variable."""
        return math.prod(self.parent_arities(name))

    def with_edges(self, edges: Iterable[Edge]) -> NetworkStructure:
        """Return a structure over the same variables with other edges."""
        return NetworkStructure(self.variables, frozenset(edges), self.manipulation_rooted)

    def sorted_names(self, names: Iterable[str]) -> tuple[str, ...]:
        """Return names in declaration order."""
        return tuple(sorted(names, key=self.position))


@dataclass(frozen=True, eq=False)
class GeneratingNetwork:
    """A structure with conditional probability tables.

    Each table has one row per parent configuration (mixed radix over the
    parents in declaration order, first parent most significant) and one
    column per child state.
    """

    structure: NetworkStructure
    cpts: Mapping[str, np.ndarray]

    def __post_init__(self) -> None:
        """Validate the tables."""
        structure = self.structure
        tables: dict[str, np.ndarray] = {}
        for name in structure.names:
            if name not in self.cpts:
                raise StructureError(f"Missing probability table for {name}")
            table = np.array(self.cpts[name], dtype=float)
            shape = (structure.row_count(name), structure.arity(name))
            if table.shape != shape:
                raise StructureError(
                    f"Probability table for {name} has shape {table.shape}, expected {shape}"
                )
            if (table < 0).any() or not np.isfinite(table).all():
                raise StructureError(f"Probability table for {name} has invalid entries")
            if (bad := np.abs(table.sum(axis=1) - 1.0) > CPT_TOLERANCE).any():
                raise StructureError(
                    f"Probability table for {name} row {int(np.argmax(bad))} does not sum to 1"
                )
            table.setflags(write=False)
            tables[name] = table
        if unknown := set(self.cpts).difference(structure.names):
            raise StructureError(f"Probability tables for undeclared variables: {sorted(unknown)}")
        object.__setattr__(self, "cpts", MappingProxyType(tables))

    @classmethod
    def uniform(cls, structure: NetworkStructure) -> GeneratingNetwork:
        """Return the network with uniform tables on every row."""
        return cls(
            structure,
            {
                name: np.full(
                    (structure.row_count(name), structure.arity(name)),
                    1.0 / structure.arity(name),
                )
                for name in structure.names
            },
        )

    def fingerprint(self) -> str:
        """Return a content hash of structure and tables."""
        return stable_hash(
            ",".join(f"{v.name}:{v.role}:{'/'.join(v.states)}" for v in self.structure.variables),
            canonical_encoding(self.structure),
            *(np.ascontiguousarray(self.cpts[n]).tobytes() for n in self.structure.names),
        )


def canonical_encoding(structure: NetworkStructure) -> str:
    """Return the sorted edge list text of a structure."""
    return ",".join(f"{parent}->{child}" for parent, child in sorted(structure.edges))


def ancestors(structure: NetworkStructure, node: str) -> frozenset[str]:
    """Return the ancestors of a node, excluding the node itself."""
    structure.position(node)
    return frozenset(nx.ancestors(structure.graph, node))


def descendants(structure: NetworkStructure, node: str) -> frozenset[str]:
    """Return the descendants of a node, excluding the node itself."""
    structure.position(node)
    return frozenset(nx.descendants(structure.graph, node))


def ancestral_closure(structure: NetworkStructure, names: Iterable[str]) -> tuple[str, ...]:
    """Return names plus all their ancestors in declaration order."""
    closed: set[str] = set()
    for name in names:
        closed.add(name)
        closed |= ancestors(structure, name)
    return structure.sorted_names(closed)


def topological_order(structure: NetworkStructure) -> tuple[str, ...]:
    """Return a topological order, ties broken by declaration order."""
    try:
        return tuple(
            nx.lexicographical_topological_sort(structure.graph, key=structure.position)
        )
    except nx.NetworkXUnfeasible:
        cycle = nx.find_cycle(structure.graph)
        raise CycleError([(str(u), str(v)) for u, v, *_ in cycle]) from None


def d_separated(
    structure: NetworkStructure, x: str, y: str, given: Iterable[str] = ()
) -> bool:
    """Return whether x and y are d-separated given a conditioning set."""
    given = set(given)
    for name in (x, y, *given):
        structure.position(name)
    if x == y:
        raise ValueError("Invalid query specified: x and y must differ")
    if x in given or y in given:
        raise ValueError("Invalid query specified: x and y must not be conditioned on")
    return bool(nx.is_d_separator(structure.graph, {x}, {y}, given))


def parameter_count(structure: NetworkStructure) -> int:
    """Return the number of free parameters of the structure."""
    return sum(
        (structure.arity(name) - 1) * structure.row_count(name) for name in structure.names
    )


def _skeleton(structure: NetworkStructure) -> frozenset[frozenset[str]]:
    return frozenset(frozenset(edge) for edge in structure.edges)


def _v_structures(structure: NetworkStructure) -> frozenset[tuple[frozenset[str], str]]:
    skeleton = _skeleton(structure)
    colliders = set()
    for child in structure.names:
        parents = structure.parents(child)
        for i, first in enumerate(parents):
            for second in parents[i + 1 :]:
                if frozenset((first, second)) not in skeleton:
                    colliders.add((frozenset((first, second)), child))
    return frozenset(colliders)


def markov_equivalent(m1: NetworkStructure, m2: NetworkStructure) -> bool:
    """Return whether two structures share skeleton and v-structures."""
    if set(m1.names) != set(m2.names):
        raise StructureError(
            f"Variable sets differ: {sorted(set(m1.names) ^ set(m2.names))}"
        )
    return _skeleton(m1) == _skeleton(m2) and _v_structures(m1) == _v_structures(m2)


def is_tree(structure: NetworkStructure, names: Iterable[str]) -> bool:
    """Return whether every named node has at most one parent."""
    return all(len(structure.parents(name)) <= 1 for name in names)


def joint_probability(network: GeneratingNetwork, case: CaseAssignment) -> float:
    """Return the probability of a complete case."""
    structure = network.structure
    if missing := set(structure.names).difference(case):
        raise StructureError(f"Case is missing variables: {sorted(missing)}")
    if extra := set(case).difference(structure.names):
        raise StructureError(f"Case names undeclared variables: {sorted(extra)}")
    index = {name: structure.variable(name).index(case[name]) for name in structure.names}
    probability = 1.0
    for name in structure.names:
        parents = structure.parents(name)
        row = config_index(
            np.array([[index[p] for p in parents]], dtype=np.int64),
            structure.parent_arities(name),
        )[0]
        probability *= float(network.cpts[name][row, index[name]])
    return probability


def joint_table(
    network: GeneratingNetwork,
    names: Iterable[str] | None = None,
    cap: int = ENUMERATION_CAP,
) -> np.ndarray:
    """Return the joint distribution over an ancestrally closed set.

    Axes follow declaration order. With no names the whole network is used.
    """
    structure = network.structure
    names = structure.names if names is None else structure.sorted_names(names)
    shape = tuple(structure.arity(name) for name in names)
    if (size := math.prod(shape)) > cap:
        raise InferenceError(f"enumeration too large: {size} joint states exceed cap {cap}")
    axis = {name: i for i, name in enumerate(names)}
    table = np.ones(shape)
    for name in names:
        parents = structure.parents(name)
        if not set(parents).issubset(axis):
            raise InferenceError(f"Variables are not ancestrally closed at {name}")
        factor = network.cpts[name].reshape(
            (*structure.parent_arities(name), structure.arity(name))
        )
        axes = [axis[parent] for parent in parents] + [axis[name]]
        factor = np.transpose(factor, np.argsort(axes))
        view = [1] * len(names)
        for a in axes:
            view[a] = shape[a]
        table = table * factor.reshape(view)
    return table


def marginal(
    network: GeneratingNetwork, names: Iterable[str], cap: int = ENUMERATION_CAP
) -> np.ndarray:
    """Return the marginal distribution with axes in the order given."""
    names = tuple(names)
    closure = ancestral_closure(network.structure, names)
    table = joint_table(network, closure, cap)
    drop = tuple(i for i, name in enumerate(closure) if name not in names)
    table = table.sum(axis=drop) if drop else table
    kept = [name for name in closure if name in names]
    return np.transpose(table, [kept.index(name) for name in names])


def infer_conditional(
    network: GeneratingNetwork,
    evidence: CaseAssignment,
    query: str,
    cap: int = ENUMERATION_CAP,
) -> dict[str, float]:
    """Return the exact posterior distribution of a query variable.

    Enumerates every completion of the ancestral closure of the query and
    evidence, which carries the full joint's marginal exactly.
    """
    structure = network.structure
    query_spec = structure.variable(query)
    if query in evidence:
        raise ValueError(f"Invalid query specified: {query} is in the evidence")
    observed = {name: structure.variable(name).index(state) for name, state in evidence.items()}
    names = (*observed, query)
    table = marginal(network, names, cap)
    posterior = table[tuple(observed.values())]
    if (total := float(posterior.sum())) <= 0.0:
        raise InferenceError("impossible evidence")
    posterior = posterior / total
    _LOGGER.debug("P(%s | %s) = %s", query, dict(evidence), posterior)
    return {state: float(p) for state, p in zip(query_spec.states, posterior, strict=True)}
