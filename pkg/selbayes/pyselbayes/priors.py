"""Dirichlet family priors: BDe construction, selection priors, validation."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import StrEnum
import logging
from types import MappingProxyType

import numpy as np
from numpy.typing import ArrayLike

from .const import CPT_TOLERANCE, DEFAULT_ESS, ENUMERATION_CAP
from .exceptions import PriorError
from .graph import GeneratingNetwork, NetworkStructure, marginal

_LOGGER = logging.getLogger(__name__)


class PriorMode(StrEnum):
    """How family hyperparameters are obtained."""

    BDE = "bde"
    EXPLICIT = "explicit"
    K2 = "k2"


@dataclass(frozen=True, eq=False)
class FamilyPrior:
    """Dirichlet hyperparameters, one (rows x states) table per variable."""

    tables: Mapping[str, np.ndarray]

    def __post_init__(self) -> None:
        """Check every entry is strictly positive and freeze the tables."""
        tables = {}
        for name, table in self.tables.items():
            table = np.array(table, dtype=float)
            if bad := np.argwhere(~np.isfinite(table) | (table <= 0)).tolist():
                raise PriorError(
                    f"Prior for {name} has alpha {table[tuple(bad[0])]} at {bad[0]}, "
                    "expected strictly positive and finite"
                )
            table.setflags(write=False)
            tables[name] = table
        object.__setattr__(self, "tables", MappingProxyType(tables))

    def alpha(self, name: str) -> np.ndarray:
        """Return the table of a variable."""
        try:
            return self.tables[name]
        except KeyError:
            raise PriorError(f"No prior table for {name}") from None

    def merged(self, other: FamilyPrior) -> FamilyPrior:
        """Return a prior whose tables are overridden by another's."""
        return FamilyPrior({**self.tables, **other.tables})


@dataclass(frozen=True, eq=False)
class BdeSpec:
    """Equivalent sample size and prior network defining P0.

    No prior network means a uniform P0.
    """

    ess: float = DEFAULT_ESS
    prior_joint: GeneratingNetwork | None = None

    def __post_init__(self) -> None:
        """Validate the sample size."""
        if not (np.isfinite(self.ess) and self.ess > 0):
            raise PriorError("Invalid equivalent sample size specified")


@dataclass(frozen=True, eq=False)
class SelectionTable:
    """Mean selection probabilities per parent configuration, with row ESS."""

    means: np.ndarray
    ess: np.ndarray

    def __post_init__(self) -> None:
        """Validate rows."""
        means = np.atleast_2d(np.array(self.means, dtype=float))
        ess = np.broadcast_to(np.array(self.ess, dtype=float), (means.shape[0],)).copy()
        if (means <= 0).any() or not np.isfinite(means).all():
            raise PriorError("Selection prior means must be strictly positive")
        if (np.abs(means.sum(axis=1) - 1.0) > CPT_TOLERANCE).any():
            raise PriorError("Selection prior rows must sum to 1")
        if not (np.isfinite(ess).all() and (ess > 0).all()):
            raise PriorError("Selection prior ESS must be positive")
        means.setflags(write=False)
        ess.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "ess", ess)


@dataclass(frozen=True, eq=False)
class SelectionPriorSpec:
    """S-family prior tables indexed by candidate m_F values."""

    parents: tuple[str, ...]
    per_mf: Mapping[int, SelectionTable]

    def __post_init__(self) -> None:
        """Freeze the mapping."""
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(
            self, "per_mf", MappingProxyType({int(k): v for k, v in self.per_mf.items()})
        )


@dataclass(frozen=True)
class Diagnostic:
    """A problem found in a prior table."""

    variable: str
    message: str
    row: int | None = None
    state: str | None = None

    def __str__(self) -> str:
        """Return a readable location and message."""
        where = self.variable
        if self.row is not None:
            where += f"[row {self.row}"
            where += f", state {self.state}]" if self.state is not None else "]"
        return f"{where}: {self.message}"


def build_bde_prior(
    structure: NetworkStructure, spec: BdeSpec, cap: int = ENUMERATION_CAP
) -> FamilyPrior:
    """Return alpha_ijk = ess * P0(X_i = k, parents = j) for every family."""
    return FamilyPrior(
        {name: bde_family_alpha(structure, name, spec, cap) for name in structure.names}
    )


def bde_family_alpha(
    structure: NetworkStructure, name: str, spec: BdeSpec, cap: int = ENUMERATION_CAP
) -> np.ndarray:
    """Return the BDe table of a single family."""
    rows, arity = structure.row_count(name), structure.arity(name)
    if spec.prior_joint is None:
        return np.full((rows, arity), spec.ess / (rows * arity))

    prior_structure = spec.prior_joint.structure
    parents = structure.parents(name)
    for member in (*parents, name):
        if prior_structure.variable(member).states != structure.variable(member).states:
            raise PriorError(f"Prior network states of {member} do not match the model")
    joint = marginal(spec.prior_joint, (*parents, name), cap).reshape(rows, arity)
    if (impossible := joint.sum(axis=1) <= 0).any():
        raise PriorError(
            f"BDe prior undefined for impossible configuration: {name} row "
            f"{int(np.argmax(impossible))}"
        )
    if (joint <= 0).any():
        row, state = np.argwhere(joint <= 0)[0]
        raise PriorError(
            f"BDe prior has zero mass for {name} row {int(row)} state "
            f"{structure.variable(name).states[state]}"
        )
    return spec.ess * joint


def build_selection_prior(
    structure: NetworkStructure, spec: SelectionPriorSpec, m_F: int
) -> FamilyPrior:
    """Return the S-family prior for one m_F candidate."""
    if (selection := structure.selection) is None:
        raise PriorError("Structure has no selection variable")
    if set(structure.parents(selection.name)) != set(spec.parents):
        raise PriorError(
            f"Selection prior is defined for parents {list(spec.parents)}, structure has "
            f"{list(structure.parents(selection.name))}"
        )
    if (table := spec.per_mf.get(m_F)) is None:
        raise PriorError(
            f"Selection prior does not cover m_F={m_F}; covered: {sorted(spec.per_mf)}"
        )
    rows = structure.row_count(selection.name)
    if table.means.shape != (rows, selection.arity):
        raise PriorError(
            f"Selection prior for m_F={m_F} has shape {table.means.shape}, expected "
            f"{(rows, selection.arity)}"
        )
    alpha = _reorder_rows(structure, selection.name, spec.parents, table.means)
    ess = _reorder_rows(structure, selection.name, spec.parents, table.ess[:, None])
    return FamilyPrior({selection.name: alpha * ess})


def _reorder_rows(
    structure: NetworkStructure, name: str, declared: tuple[str, ...], table: np.ndarray
) -> np.ndarray:
    """Map rows laid out over declared parent order onto structure order."""
    parents = structure.parents(name)
    if tuple(declared) == parents:
        return table
    arities = [structure.arity(p) for p in declared]
    shaped = table.reshape((*arities, table.shape[1]))
    order = [declared.index(p) for p in parents]
    return np.transpose(shaped, (*order, len(order))).reshape(table.shape)


def validate_prior(
    tables: Mapping[str, ArrayLike], structure: NetworkStructure
) -> list[Diagnostic]:
    """Return every violation in raw prior tables; an empty list means ok."""
    diagnostics: list[Diagnostic] = []
    for name in structure.names:
        variable = structure.variable(name)
        if name not in tables:
            diagnostics.append(Diagnostic(name, "missing table"))
            continue
        table = np.asarray(tables[name], dtype=float)
        expected = (structure.row_count(name), variable.arity)
        if table.ndim != 2 or table.shape[1] != expected[1]:
            diagnostics.append(Diagnostic(name, f"shape {table.shape}, expected {expected}"))
            continue
        if table.shape[0] != expected[0]:
            diagnostics.append(
                Diagnostic(
                    name,
                    f"{table.shape[0]} parent-configuration rows, expected {expected[0]}",
                )
            )
        for row, col in np.argwhere(~np.isfinite(table) | (table <= 0)):
            diagnostics.append(
                Diagnostic(
                    name,
                    f"alpha {table[row, col]} is not strictly positive and finite",
                    int(row),
                    variable.states[col],
                )
            )
    for name in sorted(set(tables).difference(structure.names)):
        diagnostics.append(Diagnostic(name, "table for undeclared variable"))
    return diagnostics


@dataclass(frozen=True, eq=False, kw_only=True)
class PriorModel:
    """Prior mode plus everything needed to build a FamilyPrior for any structure."""

    mode: PriorMode = PriorMode.BDE
    bde: BdeSpec = field(default_factory=BdeSpec)
    tables: Mapping[str, np.ndarray] | None = None
    alpha: float = 1.0
    selection: SelectionPriorSpec | None = None
    cap: int = ENUMERATION_CAP

    def __post_init__(self) -> None:
        """Validate the mode's inputs."""
        object.__setattr__(self, "mode", PriorMode(self.mode))
        if self.mode is PriorMode.EXPLICIT and self.tables is None:
            raise PriorError("Explicit prior mode needs tables")
        if self.tables is not None:
            object.__setattr__(self, "tables", FamilyPrior(self.tables).tables)
        if self.mode is PriorMode.K2 and not (np.isfinite(self.alpha) and self.alpha > 0):
            raise PriorError("Invalid alpha specified")

    @property
    def likelihood_equivalent(self) -> bool:
        """Return whether every family comes from one BDe prior."""
        return self.mode is PriorMode.BDE and self.selection is None

    def family_alpha(self, structure: NetworkStructure, name: str, m_F: int | None) -> np.ndarray:
        """Return the hyperparameter table of one family."""
        selection = structure.selection
        if self.selection is not None and selection is not None and name == selection.name:
            if m_F is None:
                raise PriorError("Selection prior needs an m_F value")
            return build_selection_prior(structure, self.selection, m_F).alpha(name)
        match self.mode:
            case PriorMode.BDE:
                return bde_family_alpha(structure, name, self.bde, self.cap)
            case PriorMode.K2:
                return np.full((structure.row_count(name), structure.arity(name)), self.alpha)
        table = np.asarray(self.tables.get(name) if self.tables else None, dtype=float)
        expected = (structure.row_count(name), structure.arity(name))
        if table.shape != expected:
            raise PriorError(
                f"Explicit prior table for {name} has shape {table.shape}, expected {expected}"
            )
        return table

    def family_prior(self, structure: NetworkStructure, m_F: int | None = None) -> FamilyPrior:
        """Return the full prior of a structure at one m_F candidate."""
        return FamilyPrior(
            {name: self.family_alpha(structure, name, m_F) for name in structure.names}
        )
