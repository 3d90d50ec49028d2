"""Forward sampling, selection mechanisms, manipulation and projection.

Every operation takes a seed and draws from its own
numpy.random.Generator(PCG64(seed)) stream, so identical seeds give
identical populations.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import StrEnum
import logging
import math
from types import MappingProxyType

import numpy as np
from scipy.stats import chi2_contingency

from .const import CPT_TOLERANCE, MISSING, NOT_EXPERIMENTAL
from .exceptions import SimulationError, StructureError
from .graph import GeneratingNetwork, NetworkStructure, Role, descendants, topological_order
from .scoring import Dataset, PopulationSpec
from .utils import config_index

_LOGGER = logging.getLogger(__name__)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True, eq=False)
class Population:
    """Complete cases drawn from a generating network."""

    network: GeneratingNetwork
    values: np.ndarray
    seed: int | None = None
    mechanism: str | None = None

    def __post_init__(self) -> None:
        """Validate completeness."""
        structure = self.network.structure
        values = np.array(self.values, dtype=np.int64).reshape(-1, len(structure.names))
        if (values == MISSING).any():
            raise SimulationError("Population cases must be complete")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def structure(self) -> NetworkStructure:
        """Return the generating structure."""
        return self.network.structure

    def __len__(self) -> int:
        """Return the number of cases."""
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        """Return one column."""
        return self.values[:, self.structure.position(name)]

    def replace(self, values: np.ndarray, **changes: str | int | None) -> Population:
        """Return a population with other values, keeping the network."""
        return Population(
            self.network,
            values,
            changes.get("seed", self.seed),
            changes.get("mechanism", self.mechanism),
        )

    def records(self) -> list[dict[str, str]]:
        """Return cases as state labels."""
        return Dataset(self.structure.variables, self.values).records()


def _sample_family(
    network: GeneratingNetwork,
    values: np.ndarray,
    name: str,
    rows: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw states of one variable for the given case indices by inverse CDF."""
    structure = network.structure
    parents = [structure.position(p) for p in structure.parents(name)]
    config = config_index(values[np.ix_(rows, parents)], structure.parent_arities(name))
    cumulative = np.cumsum(network.cpts[name][config], axis=1)
    draws = rng.random(rows.size)
    return np.minimum((draws[:, None] >= cumulative).sum(axis=1), structure.arity(name) - 1)


def forward_sample(network: GeneratingNetwork, n: int, seed: int) -> Population:
    """Return n i.i.d. complete cases, sampled in topological order."""
    if n < 0:
        raise ValueError(f"Invalid population size specified: {n}")
    structure = network.structure
    rng = _rng(seed)
    values = np.zeros((n, len(structure.names)), dtype=np.int64)
    rows = np.arange(n)
    for name in topological_order(structure):
        values[:, structure.position(name)] = _sample_family(network, values, name, rows, rng)
    _LOGGER.debug("Sampled %s cases with seed %s", n, seed)
    return Population(network, values, seed, "forward")


def _resample_descendants(
    network: GeneratingNetwork,
    values: np.ndarray,
    names: Iterable[str],
    rows: np.ndarray,
    rng: np.random.Generator,
) -> None:
    structure = network.structure
    for name in topological_order(structure):
        if name in names and rows.size:
            values[rows, structure.position(name)] = _sample_family(
                network, values, name, rows, rng
            )


class MechanismKind(StrEnum):
    """How S is assigned."""

    MECHANISTIC = "mechanistic"
    QUOTA = "quota"
    COMPOSITE = "composite"


@dataclass(frozen=True)
class Condition:
    """A variable taking one of the listed states."""

    variable: str
    states: tuple[str, ...]

    def mask(self, population: Population) -> np.ndarray:
        """Return which cases satisfy the condition."""
        spec = population.structure.variable(self.variable)
        indices = [spec.index(state) for state in self.states]
        return np.isin(population.column(self.variable), indices)


@dataclass(frozen=True)
class Quota:
    """Exactly `count` cases meeting every condition get the sampled state `state`."""

    state: str
    count: int
    conditions: tuple[Condition, ...] = ()

    def __post_init__(self) -> None:
        """Validate the count."""
        if self.count < 0:
            raise SimulationError(f"Invalid quota specified for {self.state}: {self.count}")


@dataclass(frozen=True, kw_only=True)
class SelectionMechanism:
    """Mechanistic, quota or composite assignment of S.

    A composite evaluates its parts independently. A case picked by several
    parts takes the `combined` state registered for that set of states, or
    else the state of the first part that picked it.
    """

    kind: MechanismKind
    quotas: tuple[Quota, ...] = ()
    parts: tuple[SelectionMechanism, ...] = ()
    combined: Mapping[frozenset[str], str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Validate the kind's inputs."""
        object.__setattr__(self, "kind", MechanismKind(self.kind))
        object.__setattr__(
            self, "combined", MappingProxyType({frozenset(k): v for k, v in self.combined.items()})
        )
        if self.kind is MechanismKind.QUOTA and not self.quotas:
            raise SimulationError("Quota selection needs at least one quota")
        if self.kind is MechanismKind.COMPOSITE and not self.parts:
            raise SimulationError("Composite selection needs at least one part")

    def describe(self) -> str:
        """Return a one-line description for file headers."""
        match self.kind:
            case MechanismKind.QUOTA:
                return "quota(" + ",".join(f"{q.state}={q.count}" for q in self.quotas) + ")"
            case MechanismKind.COMPOSITE:
                return "composite(" + ";".join(p.describe() for p in self.parts) + ")"
        return "mechanistic"


def _assign(
    population: Population, mechanism: SelectionMechanism, rng: np.random.Generator
) -> np.ndarray:
    """Return S state indices for every case."""
    structure = population.structure
    selection = structure.selection
    unsampled = selection.unsampled_index

    if mechanism.kind is MechanismKind.MECHANISTIC:
        return _sample_family(
            population.network, population.values, selection.name, np.arange(len(population)), rng
        )

    if mechanism.kind is MechanismKind.QUOTA:
        assigned = np.full(len(population), unsampled, dtype=np.int64)
        for quota in mechanism.quotas:
            state = selection.index(quota.state)
            if state == unsampled:
                raise SimulationError(f"Quota state {quota.state} is the unsampled state")
            eligible = assigned == unsampled
            for condition in quota.conditions:
                eligible &= condition.mask(population)
            candidates = np.flatnonzero(eligible)
            if candidates.size < quota.count:
                raise SimulationError(
                    f"Quota for {quota.state} needs {quota.count} cases, only "
                    f"{candidates.size} satisfy its conditions"
                )
            chosen = rng.choice(candidates, size=quota.count, replace=False)
            assigned[chosen] = state
        return assigned

    picks = [_assign(population, part, rng) for part in mechanism.parts]
    assigned = np.full(len(population), unsampled, dtype=np.int64)
    for case in range(len(population)):
        states = [int(p[case]) for p in picks if p[case] != unsampled]
        if not states:
            continue
        labels = frozenset(selection.states[s] for s in states)
        if len(labels) > 1 and labels in mechanism.combined:
            assigned[case] = selection.index(mechanism.combined[labels])
        else:
            assigned[case] = states[0]
    return assigned


def apply_selection(
    population: Population, mechanism: SelectionMechanism, seed: int
) -> Population:
    """Return the population with S assigned by the mechanism."""
    if (selection := population.structure.selection) is None:
        raise SimulationError("Generating network has no selection variable")
    values = population.values.copy()
    values[:, population.structure.position(selection.name)] = _assign(
        population, mechanism, _rng(seed)
    )
    column = values[:, population.structure.position(selection.name)]
    counts = np.bincount(column, minlength=selection.arity)
    _LOGGER.debug(
        "Selection %s: %s",
        mechanism.describe(),
        dict(zip(selection.states, counts.tolist(), strict=True)),
    )
    return population.replace(values, mechanism=mechanism.describe())


@dataclass(frozen=True, kw_only=True)
class ManipulationPlan:
    """Enrollment and assignment of one manipulation variable.

    `count` enrolls exactly that many cases; otherwise each case enrolls
    with probability `fraction`.
    """

    variable: str
    assignment: Mapping[str, float]
    fraction: float = 0.0
    count: int | None = None
    compliance: float = 1.0

    def __post_init__(self) -> None:
        """Validate probabilities."""
        object.__setattr__(self, "assignment", MappingProxyType(dict(self.assignment)))
        for label, value in (("fraction", self.fraction), ("compliance", self.compliance)):
            if not 0.0 <= value <= 1.0:
                raise SimulationError(f"Invalid {label} specified for {self.variable}: {value}")
        if self.count is not None and self.count < 0:
            raise SimulationError(f"Invalid count specified for {self.variable}: {self.count}")
        if any(p < 0 for p in self.assignment.values()) or (
            abs(math.fsum(self.assignment.values()) - 1.0) > CPT_TOLERANCE
        ):
            raise SimulationError(f"Assignment distribution of {self.variable} must sum to 1")
        if NOT_EXPERIMENTAL in self.assignment:
            raise SimulationError(f"'{NOT_EXPERIMENTAL}' is not an assignable state")


@dataclass(frozen=True)
class ManipulationDesign:
    """Plans applied in order."""

    plans: tuple[ManipulationPlan, ...]


def _natural_rows(structure: NetworkStructure, values: np.ndarray, q_name: str) -> np.ndarray:
    """Return values with Q set to 'ne', as the target's natural CPT sees them."""
    natural = values.copy()
    q_spec = structure.variable(q_name)
    natural[:, structure.position(q_name)] = q_spec.index(NOT_EXPERIMENTAL)
    return natural


def apply_manipulation(
    population: Population, design: ManipulationDesign, seed: int
) -> Population:
    """Assign Q variables, force complying targets and regenerate descendants.

    A target that is not forced keeps or redraws the value its CPT gives
    under Q = 'ne'. Apply before selection so S sees manipulated values.
    """
    structure = population.structure
    network = population.network
    rng = _rng(seed)
    values = population.values.copy()
    n = len(population)

    for plan in design.plans:
        q_spec = structure.variable(plan.variable)
        if q_spec.role is not Role.MANIPULATION:
            raise StructureError(f"{plan.variable} is not a manipulation variable")
        target = q_spec.target
        q_col, x_col = structure.position(plan.variable), structure.position(target)
        not_experimental = q_spec.index(NOT_EXPERIMENTAL)

        if plan.count is not None:
            if plan.count > n:
                raise SimulationError(f"Cannot enroll {plan.count} of {n} cases")
            enrolled = np.zeros(n, dtype=bool)
            enrolled[rng.choice(n, size=plan.count, replace=False)] = True
        else:
            enrolled = rng.random(n) < plan.fraction
        states = [q_spec.index(s) for s in plan.assignment]
        probabilities = np.array(list(plan.assignment.values()), dtype=float)
        assigned = rng.choice(states, size=n, p=probabilities / probabilities.sum())
        complies = rng.random(n) < plan.compliance

        previous = values[:, q_col].copy()
        values[:, q_col] = np.where(enrolled, assigned, not_experimental)
        forced = enrolled & complies
        redraw = np.flatnonzero(
            (enrolled & ~complies) | (~enrolled & (previous != not_experimental))
        )

        values[forced, x_col] = values[forced, q_col]
        if redraw.size:
            natural = _natural_rows(structure, values, plan.variable)
            values[redraw, x_col] = _sample_family(network, natural, target, redraw, rng)
        changed = np.flatnonzero(forced | np.isin(np.arange(n), redraw))
        _resample_descendants(network, values, descendants(structure, target), changed, rng)
        _LOGGER.debug(
            "%s: enrolled %s, forced %s",
            plan.variable,
            int(enrolled.sum()),
            int(forced.sum()),
        )

    return population.replace(values)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Archive of a projected population."""

    population: Population
    sampled_rows: np.ndarray
    latent: tuple[str, ...]

    @classmethod
    def from_population(cls, population: Population) -> GroundTruth:
        """Return the archive of a complete population.

        Sampled cases are those whose selection value is not the unsampled
        state, kept in population order.
        """
        structure = population.structure
        if (selection := structure.selection) is None:
            raise SimulationError("Population has no selection variable")
        sampled = np.flatnonzero(population.column(selection.name) != selection.unsampled_index)
        return cls(population, sampled, structure.latent_names)

    def reconstruct(self, dataset: Dataset) -> Population:
        """Re-attach archived latent values and unsampled cases to a dataset."""
        structure = self.population.structure
        values = self.population.values.copy()
        projected = dataset.matrix(structure)
        if projected.shape[0] != self.sampled_rows.size:
            raise SimulationError("Dataset does not match the archived projection")
        columns = [i for i, name in enumerate(structure.names) if name not in self.latent]
        values[np.ix_(self.sampled_rows, columns)] = projected[:, columns]
        return self.population.replace(values)


def project(population: Population) -> tuple[Dataset, PopulationSpec, GroundTruth]:
    """Split a population into sampled cases and a point-mass m_F.

    Latent variables are blanked to MISSING in the dataset.
    """
    truth = GroundTruth.from_population(population)
    structure = population.structure
    values = population.values[truth.sampled_rows].copy()
    for name in truth.latent:
        values[:, structure.position(name)] = MISSING
    dataset = Dataset(structure.variables, values)
    m_F = len(population) - truth.sampled_rows.size
    _LOGGER.debug("Projected %s sampled cases, m_F=%s", truth.sampled_rows.size, m_F)
    return dataset, PopulationSpec.point(m_F), truth


@dataclass(frozen=True)
class BiasCheck:
    """Marginal association of two variables against their selected association."""

    correlation: float
    g_statistic: float
    p_value: float
    selected: int


def selection_bias_check(
    population: Population, x: str, y: str, selected_state: str | None = None
) -> BiasCheck:
    """Return the full-population correlation and a G-test on the selected cases.

    Selected cases are those with S in `selected_state`, or in any sampled
    state when none is given.
    """
    selection = population.structure.selection
    if selection is None:
        raise SimulationError("Population has no selection variable")
    s_column = population.column(selection.name)
    if selected_state is None:
        mask = s_column != selection.unsampled_index
    else:
        mask = s_column == selection.index(selected_state)

    xs, ys = population.column(x), population.column(y)
    with np.errstate(invalid="ignore", divide="ignore"):
        correlation = float(np.corrcoef(xs, ys)[0, 1]) if len(population) > 1 else math.nan

    table = np.zeros((population.structure.arity(x), population.structure.arity(y)))
    np.add.at(table, (xs[mask], ys[mask]), 1)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    if min(table.shape) < 2:
        return BiasCheck(correlation, 0.0, 1.0, int(mask.sum()))
    statistic, p_value, _, _ = chi2_contingency(table, correction=False, lambda_="log-likelihood")
    return BiasCheck(correlation, float(statistic), float(p_value), int(mask.sum()))
