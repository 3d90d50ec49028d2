"""Closed-form Dirichlet-multinomial marginal likelihood in log space."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
import logging
import math
from types import MappingProxyType

import numpy as np
from scipy.special import gammaln

from .const import MISSING, MISSING_LABEL, ROW_SUM_TOLERANCE
from .exceptions import DataError, PriorError
from .graph import NetworkStructure, Role, VariableSpec, canonical_encoding
from .priors import FamilyPrior
from .utils import config_index

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Cases as state indices, MISSING (-1) where unobserved.

    `unsampled` records explicit unsampled rows a loader dropped; they are
    implied through the population spec, never stored.
    """

    variables: tuple[VariableSpec, ...]
    values: np.ndarray
    unsampled: int = 0

    def __post_init__(self) -> None:
        """Validate states and the selection column."""
        variables = tuple(self.variables)
        values = np.array(self.values, dtype=np.int64).reshape(-1, len(variables))
        for i, variable in enumerate(variables):
            column = values[:, i]
            if ((column < MISSING) | (column >= variable.arity)).any():
                row = int(np.argmax((column < MISSING) | (column >= variable.arity)))
                raise DataError(f"Invalid state index in row {row} for {variable.name}")
            if variable.role is Role.SELECTION and (column == MISSING).any():
                row = int(np.argmax(column == MISSING))
                raise DataError(
                    f"Row {row}: {variable.name} is missing, but S never has a missing value"
                )
        values.setflags(write=False)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_records(
        cls, variables: Iterable[VariableSpec], records: Iterable[Mapping[str, str | None]]
    ) -> Dataset:
        """Build a dataset from rows of state labels; None or '?' is missing."""
        variables = tuple(variables)
        rows = [
            [
                MISSING
                if (state := record.get(v.name)) in (None, MISSING_LABEL)
                else v.index(state)
                for v in variables
            ]
            for record in records
        ]
        return cls(variables, np.array(rows, dtype=np.int64).reshape(-1, len(variables)))

    def __len__(self) -> int:
        """Return the number of cases."""
        return self.values.shape[0]

    @property
    def names(self) -> tuple[str, ...]:
        """Return column names."""
        return tuple(v.name for v in self.variables)

    def column(self, name: str) -> np.ndarray:
        """Return one column."""
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise DataError(f"Unknown column: {name}") from None

    def matrix(self, structure: NetworkStructure) -> np.ndarray:
        """Return values with columns in the structure's declaration order."""
        if set(self.names) != set(structure.names):
            raise DataError(
                f"Dataset columns {sorted(self.names)} do not match variables "
                f"{sorted(structure.names)}"
            )
        order = []
        for variable in structure.variables:
            i = self.names.index(variable.name)
            if self.variables[i].states != variable.states:
                raise DataError(f"States of {variable.name} differ from the structure")
            order.append(i)
        return self.values[:, order]

    def records(self) -> list[dict[str, str]]:
        """Return rows as state labels with '?' for missing."""
        return [
            {
                v.name: MISSING_LABEL if value == MISSING else v.states[value]
                for v, value in zip(self.variables, row, strict=True)
            }
            for row in self.values.tolist()
        ]


@dataclass(frozen=True, eq=False)
class PopulationSpec:
    """Prior over the number of unsampled cases m_F.

    m_T is implicit: the number of sampled cases in the dataset.
    """

    m_f_prior: Mapping[int, float]
    per_structure: Mapping[str, Mapping[int, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Validate and normalize the categorical tables."""
        object.__setattr__(self, "m_f_prior", _categorical(self.m_f_prior))
        object.__setattr__(
            self,
            "per_structure",
            MappingProxyType({k: _categorical(v) for k, v in self.per_structure.items()}),
        )

    @classmethod
    def point(cls, m_F: int) -> PopulationSpec:
        """Return a point mass at m_F."""
        return cls({m_F: 1.0})

    def prior_for(self, structure: NetworkStructure) -> Mapping[int, float]:
        """Return P(m_F | M, K), structure-independent unless overridden."""
        return self.per_structure.get(canonical_encoding(structure), self.m_f_prior)

    @property
    def point_mass(self) -> int | None:
        """Return m_F when the default prior is a point mass."""
        support = [m for m, p in self.m_f_prior.items() if p > 0]
        return support[0] if len(support) == 1 and not self.per_structure else None

    def shifted(self, increment: int) -> PopulationSpec:
        """Return the spec with every candidate increased."""
        if not increment:
            return self
        return PopulationSpec(
            {m + increment: p for m, p in self.m_f_prior.items()},
            {k: {m + increment: p for m, p in v.items()} for k, v in self.per_structure.items()},
        )


def _categorical(table: Mapping[int, float]) -> Mapping[int, float]:
    if not table:
        raise DataError("Population prior needs at least one m_F value")
    items = {}
    for value, probability in table.items():
        if int(value) != value or int(value) < 0:
            raise DataError(f"Invalid m_F value specified: {value}")
        if not (0.0 <= float(probability) <= 1.0):
            raise DataError(f"Invalid m_F probability specified: {probability}")
        items[int(value)] = float(probability)
    if abs((total := math.fsum(items.values())) - 1.0) > ROW_SUM_TOLERANCE:
        raise DataError(f"m_F probabilities sum to {total}, not 1")
    return MappingProxyType({k: items[k] / total for k in sorted(items)})


@dataclass(frozen=True, eq=False)
class SufficientCounts:
    """N_ijk tables, one (rows x states) table per variable."""

    tables: Mapping[str, np.ndarray]

    def __post_init__(self) -> None:
        """Freeze the tables."""
        object.__setattr__(self, "tables", MappingProxyType(dict(self.tables)))


@dataclass(frozen=True)
class LogScore:
    """A natural-log score and the computation path that produced it."""

    value: float
    method: str


def observed_families(structure: NetworkStructure, values: np.ndarray, name: str) -> np.ndarray:
    """Return a mask of rows fully observed on a variable's family."""
    family = [structure.position(p) for p in structure.parents(name)]
    family.append(structure.position(name))
    return (values[:, family] != MISSING).all(axis=1)


def family_cells(structure: NetworkStructure, values: np.ndarray, name: str) -> np.ndarray:
    """Return each row's flat (row * arity + state) cell, or -1 when not fully observed."""
    parents = [structure.position(p) for p in structure.parents(name)]
    child = values[:, structure.position(name)]
    mask = observed_families(structure, values, name)
    rows = config_index(
        np.where(mask[:, None], values[:, parents], 0), structure.parent_arities(name)
    )
    return np.where(mask, rows * structure.arity(name) + child, -1)


def tally_counts(
    structure: NetworkStructure, dataset: Dataset, scope: Iterable[str] | None = None
) -> SufficientCounts:
    """Count N_ijk over cases fully observed on each family in scope."""
    values = dataset.matrix(structure)
    tables = {}
    for name in structure.names if scope is None else structure.sorted_names(scope):
        cells = family_cells(structure, values, name)
        size = structure.row_count(name) * structure.arity(name)
        tables[name] = np.bincount(cells[cells >= 0], minlength=size).reshape(
            structure.row_count(name), structure.arity(name)
        )
    return SufficientCounts(tables)


def family_log_score(alpha: np.ndarray, counts: np.ndarray) -> np.ndarray | float:
    """Return the log marginal likelihood of one family.

    `counts` may carry leading batch axes over (rows x states).
    """
    alpha_rows = alpha.sum(axis=-1)
    count_rows = counts.sum(axis=-1)
    return (gammaln(alpha_rows) - gammaln(alpha_rows + count_rows)).sum(axis=-1) + (
        gammaln(alpha + counts) - gammaln(alpha)
    ).sum(axis=(-2, -1))


def check_alpha(name: str, alpha: np.ndarray, counts: np.ndarray) -> None:
    """Raise when a table is unusable for the closed-form score."""
    if alpha.shape != counts.shape[-2:]:
        raise PriorError(f"Prior for {name} has shape {alpha.shape}, counts {counts.shape[-2:]}")
    if not np.isfinite(alpha).all() or (alpha <= 0).any():
        raise PriorError(f"Prior for {name} has a nonpositive alpha")


def log_ch_score(counts: SufficientCounts, prior: FamilyPrior) -> LogScore:
    """Return the Dirichlet-multinomial (BDe) log score of complete-family counts."""
    total = 0.0
    for name, table in counts.tables.items():
        alpha = prior.alpha(name)
        check_alpha(name, alpha, table)
        total += float(family_log_score(alpha, table))
    return LogScore(total, "ch")


def check_ancestral_closure(structure: NetworkStructure, values: np.ndarray) -> None:
    """Raise unless every observed variable has all its parents observed."""
    observed = values != MISSING
    for name in structure.names:
        if not (parents := [structure.position(p) for p in structure.parents(name)]):
            continue
        bad = observed[:, structure.position(name)] & ~observed[:, parents].all(axis=1)
        if bad.any():
            row = int(np.argmax(bad))
            missing = [
                p
                for p in structure.parents(name)
                if values[row, structure.position(p)] == MISSING
            ]
            raise DataError(
                f"Case {row} is not ancestrally closed: {name} is observed but parent "
                f"{missing[0]} is missing"
            )


def score_ancestral(
    structure: NetworkStructure, prior: FamilyPrior, dataset: Dataset
) -> LogScore:
    """Return the exact log marginal likelihood of ancestrally closed cases."""
    check_ancestral_closure(structure, dataset.matrix(structure))
    score = log_ch_score(tally_counts(structure, dataset), prior)
    _LOGGER.debug("Ancestral score of %s: %s", canonical_encoding(structure), score.value)
    return LogScore(score.value, "direct")
