"""Marginal likelihood of data gathered under selection.

Unsampled cases are never stored: a problem carries the sampled cases and a
prior over how many unsampled cases exist. Each unsampled case is known only
through its selection state, so scoring sums over completions of the values
it is missing, either all domain values (full), only the ancestors of S
(ancestral), or count vectors over ancestor configurations (collapsed).
"""

from __future__ import annotations

from collections.abc import Callable, Collection, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import StrEnum
import itertools
import logging
import math

import numpy as np
from scipy.special import gammaln

from .const import CHUNK_SIZE, DEFAULT_BUDGET, MISSING, TERM_COUNT_LIMIT
from .exceptions import (
    BudgetExceededError,
    DataError,
    MethodUnavailableError,
    StructureError,
)
from .graph import NetworkStructure, VariableSpec, ancestors
from .priors import PriorModel
from .scoring import (
    Dataset,
    LogScore,
    PopulationSpec,
    check_alpha,
    check_ancestral_closure,
    family_cells,
    family_log_score,
)
from .transform import bic_heuristic_score, make_s_root, tree_fastpath_score
from .utils import log_sum_exp

_LOGGER = logging.getLogger(__name__)


class Strategy(StrEnum):
    """Scoring strategies accepted by marginal_likelihood."""

    AUTO = "auto"
    FULL = "full"
    ANCESTRAL = "ancestral"
    COLLAPSED = "collapsed"
    TREE = "tree"
    BIC = "bic"


class TermMode(StrEnum):
    """What term_count counts."""

    FULL = "full"
    ANCESTRAL = "ancestral"
    COLLAPSED = "collapsed"


@dataclass(frozen=True)
class EnumerationBudget:
    """Cap on the number of summation terms."""

    max_terms: int = DEFAULT_BUDGET

    def __post_init__(self) -> None:
        """Validate the cap."""
        if int(self.max_terms) < 1:
            raise ValueError("Invalid budget specified")


type Budget = EnumerationBudget | int


def _max_terms(budget: Budget) -> int:
    return budget.max_terms if isinstance(budget, EnumerationBudget) else int(budget)


@dataclass(frozen=True, eq=False)
class SelectionProblem:
    """Structure with S, prior, sampled cases and population spec."""

    structure: NetworkStructure
    prior: PriorModel
    data: Dataset
    population: PopulationSpec

    def __post_init__(self) -> None:
        """Validate that only sampled cases are stored."""
        if (selection := self.structure.selection) is None:
            raise StructureError("Selection problems need a selection variable")
        column = self.data.matrix(self.structure)[:, self.structure.position(selection.name)]
        if (column == selection.unsampled_index).any():
            row = int(np.argmax(column == selection.unsampled_index))
            raise DataError(
                f"Case {row} is unsampled; unsampled cases are implied by the population spec"
            )

    @property
    def selection(self) -> VariableSpec:
        """Return the selection variable."""
        return self.structure.selection

    @property
    def m_T(self) -> int:
        """Return the number of sampled cases."""
        return len(self.data)

    @property
    def values(self) -> np.ndarray:
        """Return sampled cases in declaration order."""
        return self.data.matrix(self.structure)

    def with_structure(self, structure: NetworkStructure) -> SelectionProblem:
        """Return the same problem scored against another structure."""
        return SelectionProblem(structure, self.prior, self.data, self.population)

    def m_f_candidates(self) -> dict[int, float]:
        """Return P(m_F | M, K) for this structure."""
        return dict(self.population.prior_for(self.structure))


@dataclass(frozen=True, eq=False)
class ScoreParts:
    """A log score split into untouched family scores and the coupled sum.

    `fixed` holds families no enumerated case contributes to; `coupled` is
    the log-sum over completions of the remaining (`touched`) families.
    """

    fixed: dict[str, float]
    coupled: float
    touched: frozenset[str]
    terms: int

    @property
    def value(self) -> float:
        """Return the total log score."""
        return math.fsum(self.fixed.values()) + self.coupled


@dataclass(frozen=True, eq=False)
class _Slot:
    """A case whose free columns are summed over."""

    template: np.ndarray
    free: tuple[int, ...]


def _resolve_m_f(problem: SelectionProblem, m_F: int | None) -> int:
    if m_F is None:
        if (m_F := problem.population.point_mass) is None:
            raise ValueError("Invalid m_F specified: the population prior is not a point mass")
    if int(m_F) != m_F or m_F < 0:
        raise ValueError(f"Invalid m_F specified: {m_F}")
    return int(m_F)


def _enumerated_names(problem: SelectionProblem, mode: TermMode) -> tuple[str, ...]:
    structure = problem.structure
    if mode is TermMode.FULL:
        return tuple(n for n in structure.names if n != problem.selection.name)
    return structure.sorted_names(ancestors(structure, problem.selection.name))


def term_count(problem: SelectionProblem, mode: TermMode | str, m_F: int | None = None) -> int:
    """Return the number of summation terms for a fixed m_F."""
    mode = TermMode(mode)
    m_F = _resolve_m_f(problem, m_F)
    per_case = math.prod(problem.structure.arity(n) for n in _enumerated_names(problem, mode))
    if mode is TermMode.COLLAPSED:
        terms = math.comb(per_case + m_F - 1, m_F)
    else:
        terms = per_case**m_F
    if terms > TERM_COUNT_LIMIT:
        raise BudgetExceededError(None, TERM_COUNT_LIMIT)
    return terms


def _unsampled_slot(problem: SelectionProblem, free: Sequence[str]) -> _Slot:
    structure = problem.structure
    template = np.full(len(structure.names), MISSING, dtype=np.int64)
    template[structure.position(problem.selection.name)] = problem.selection.unsampled_index
    return _Slot(template, tuple(structure.position(n) for n in free))


def _slot_rows(slot: _Slot, arities: Sequence[int]) -> np.ndarray:
    """Return every completion of a slot in lexicographic order."""
    shape = tuple(arities[i] for i in slot.free)
    configs = np.indices(shape).reshape(len(shape), -1).T
    rows = np.repeat(slot.template[None, :], configs.shape[0], axis=0)
    if slot.free:
        rows[:, list(slot.free)] = configs
    return rows


@dataclass(frozen=True, eq=False)
class _Coupled:
    """Inputs of the coupled sum: touched families and per-slot cells."""

    alpha: tuple[np.ndarray, ...]
    base: tuple[np.ndarray, ...]
    cells: tuple[tuple[np.ndarray, ...], ...]
    shape: tuple[int, ...]


def _ordered_chunk(coupled: _Coupled, bounds: tuple[int, int]) -> float:
    start, stop = bounds
    index = np.unravel_index(np.arange(start, stop), coupled.shape)
    total = np.zeros(stop - start)
    for alpha, base, cells in zip(coupled.alpha, coupled.base, coupled.cells, strict=True):
        delta = np.zeros((stop - start, base.size))
        for slot_index, slot_cells in zip(index, cells, strict=True):
            cell = slot_cells[slot_index]
            valid = np.nonzero(cell >= 0)[0]
            delta[valid, cell[valid]] += 1
        total += family_log_score(alpha, (base + delta).reshape(-1, *alpha.shape))
    return log_sum_exp(total)


def _collapsed_chunk(coupled: _Coupled, m_F: int, bars: Sequence[tuple[int, ...]]) -> float:
    """Score count vectors given as stars-and-bars positions."""
    configs = coupled.shape[0]
    positions = np.array(bars, dtype=np.int64).reshape(len(bars), configs - 1)
    edges = np.hstack(
        (
            np.full((len(bars), 1), -1),
            positions,
            np.full((len(bars), 1), m_F + configs - 1),
        )
    )
    counts = (np.diff(edges, axis=1) - 1).astype(float)
    total = gammaln(m_F + 1) - gammaln(counts + 1).sum(axis=1)
    for alpha, base, cells in zip(coupled.alpha, coupled.base, coupled.cells, strict=True):
        onehot = np.zeros((configs, base.size))
        valid = np.nonzero(cells[0] >= 0)[0]
        onehot[valid, cells[0][valid]] = 1
        total += family_log_score(alpha, (base + counts @ onehot).reshape(-1, *alpha.shape))
    return log_sum_exp(total)


def _run_chunks(fn: Callable, chunks: Iterator, workers: int) -> list[float]:
    if workers <= 1:
        return [fn(chunk) for chunk in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _score_slots(
    structure: NetworkStructure,
    alpha_of: Callable[[str], np.ndarray],
    fixed_values: np.ndarray,
    slots: Sequence[_Slot],
    *,
    collapse: bool,
    budget: int,
    workers: int = 1,
    scope: Collection[str] | None = None,
) -> ScoreParts:
    """Sum the closed-form score over every completion of the slots.

    Only families in scope are scored when one is given. Partial log-sums
    are merged in chunk order, so the result does not depend on the number
    of workers.
    """
    determined = [slot.template for slot in slots if not slot.free]
    if determined:
        fixed_values = np.vstack((fixed_values, *determined))
        slots = [slot for slot in slots if slot.free]
    check_ancestral_closure(structure, fixed_values)
    arities = [v.arity for v in structure.variables]
    slot_rows = [_slot_rows(slot, arities) for slot in slots]
    for rows in slot_rows:
        check_ancestral_closure(structure, rows[:1])
    shape = tuple(rows.shape[0] for rows in slot_rows)

    if collapse:
        configs = shape[0] if shape else 1
        terms = math.comb(configs + len(slots) - 1, len(slots))
    else:
        terms = math.prod(shape)
    if terms > budget:
        raise BudgetExceededError(terms, budget)

    touched = []
    fixed: dict[str, float] = {}
    alphas, bases, cells = [], [], []
    for name in structure.names:
        if scope is not None and name not in scope:
            continue
        slot_cells = tuple(family_cells(structure, rows, name) for rows in slot_rows)
        is_touched = any((c >= 0).any() for c in slot_cells)
        alpha = alpha_of(name)
        table_shape = (structure.row_count(name), structure.arity(name))
        base_cells = family_cells(structure, fixed_values, name)
        base = np.bincount(base_cells[base_cells >= 0], minlength=math.prod(table_shape))
        check_alpha(name, alpha, base.reshape(table_shape))
        base = base.astype(float)
        if is_touched:
            touched.append(name)
            alphas.append(alpha)
            bases.append(base)
            cells.append(slot_cells)
        else:
            fixed[name] = float(family_log_score(alpha, base.reshape(alpha.shape)))

    if not slots or not touched:
        return ScoreParts(fixed, 0.0, frozenset(touched), terms)

    if collapse:
        coupled = _Coupled(tuple(alphas), tuple(bases), tuple(cells), (shape[0],))
        # count vectors in lexicographic order of their bar positions
        multisets = itertools.combinations(range(len(slots) + shape[0] - 1), shape[0] - 1)
        partials = _run_chunks(
            lambda batch: _collapsed_chunk(coupled, len(slots), batch),
            itertools.batched(multisets, CHUNK_SIZE),
            workers,
        )
    else:
        coupled = _Coupled(tuple(alphas), tuple(bases), tuple(cells), shape)
        partials = _run_chunks(
            lambda bounds: _ordered_chunk(coupled, bounds),
            ((s, min(s + CHUNK_SIZE, terms)) for s in range(0, terms, CHUNK_SIZE)),
            workers,
        )
    _LOGGER.debug("Summed %s terms over families %s", terms, touched)
    return ScoreParts(fixed, log_sum_exp(partials), frozenset(touched), terms)


def score_parts(
    problem: SelectionProblem,
    m_F: int,
    method: TermMode | str,
    budget: Budget = DEFAULT_BUDGET,
    *,
    latent_vars: Sequence[str] = (),
    workers: int = 1,
    scope: Collection[str] | None = None,
) -> ScoreParts:
    """Return the decomposed log score for one m_F."""
    method = TermMode(method)
    m_F = _resolve_m_f(problem, m_F)
    structure = problem.structure
    values = problem.values
    slots: list[_Slot] = []

    if latent_vars:
        columns = [structure.position(n) for n in latent_vars]
        if (values[:, columns] != MISSING).any():
            column = columns[int(np.argmax((values[:, columns] != MISSING).any(axis=0)))]
            raise DataError(f"latent variable has data: {structure.names[column]}")
        slots.extend(_Slot(row, tuple(columns)) for row in values)
        fixed_values = values[:0]
    else:
        fixed_values = values

    unsampled = _unsampled_slot(problem, _enumerated_names(problem, method))
    slots.extend([unsampled] * m_F)
    alpha_of = lambda name: problem.prior.family_alpha(structure, name, m_F)  # noqa: E731
    return _score_slots(
        structure,
        alpha_of,
        fixed_values,
        slots,
        collapse=method is TermMode.COLLAPSED and not latent_vars,
        budget=_max_terms(budget),
        workers=workers,
        scope=scope,
    )


def score_full_enumeration(
    problem: SelectionProblem, m_F: int, budget: Budget = DEFAULT_BUDGET, workers: int = 1
) -> LogScore:
    """Sum over completions of every domain value of the unsampled cases."""
    parts = score_parts(problem, m_F, TermMode.FULL, budget, workers=workers)
    return LogScore(parts.value, Strategy.FULL.value)


def score_ancestral_enumeration(
    problem: SelectionProblem, m_F: int, budget: Budget = DEFAULT_BUDGET, workers: int = 1
) -> LogScore:
    """Sum over completions of the ancestors of S only."""
    parts = score_parts(problem, m_F, TermMode.ANCESTRAL, budget, workers=workers)
    return LogScore(parts.value, Strategy.ANCESTRAL.value)


def score_count_collapsed(
    problem: SelectionProblem, m_F: int, budget: Budget = DEFAULT_BUDGET, workers: int = 1
) -> LogScore:
    """Sum over count vectors of ancestor configurations, weighted by multinomials."""
    parts = score_parts(problem, m_F, TermMode.COLLAPSED, budget, workers=workers)
    return LogScore(parts.value, Strategy.COLLAPSED.value)


def score_with_latents(
    problem: SelectionProblem,
    latent_vars: Sequence[str],
    m_F: int,
    budget: Budget = DEFAULT_BUDGET,
    workers: int = 1,
) -> LogScore:
    """Additionally sum over latent values in every sampled case."""
    structure = problem.structure
    latent_vars = structure.sorted_names(latent_vars)
    for name in latent_vars:
        if not structure.variable(name).latent:
            raise StructureError(f"Variable {name} is not declared latent")
    parts = score_parts(
        problem, m_F, TermMode.ANCESTRAL, budget, latent_vars=latent_vars, workers=workers
    )
    return LogScore(parts.value, "latent" if latent_vars else Strategy.ANCESTRAL.value)


def _score_exact_auto(
    problem: SelectionProblem, m_F: int, budget: int, workers: int
) -> LogScore:
    structure = problem.structure
    if not structure.parents(problem.selection.name):
        parts = score_parts(problem, m_F, TermMode.ANCESTRAL, budget, workers=workers)
        return LogScore(parts.value, "direct")
    if problem.prior.likelihood_equivalent and make_s_root(structure).tree_valid:
        try:
            return tree_fastpath_score(problem, budget, m_F=m_F)
        except (MethodUnavailableError, DataError) as err:
            _LOGGER.debug("Tree fast path unavailable: %s", err)
    for mode, scorer in (
        (TermMode.COLLAPSED, score_count_collapsed),
        (TermMode.ANCESTRAL, score_ancestral_enumeration),
        (TermMode.FULL, score_full_enumeration),
    ):
        try:
            if term_count(problem, mode, m_F) <= budget:
                return scorer(problem, m_F, budget, workers)
        except BudgetExceededError:
            continue
    raise MethodUnavailableError(
        f"No exact method fits the budget of {budget} terms at m_F={m_F}; "
        "use strategy bic for a heuristic score"
    )


def _score_at(
    problem: SelectionProblem, m_F: int, strategy: Strategy, budget: int, workers: int
) -> LogScore:
    if strategy is Strategy.BIC:
        return LogScore(bic_heuristic_score(problem, m_F).bic, Strategy.BIC.value)
    if latents := problem.structure.latent_names:
        if strategy not in (Strategy.AUTO, Strategy.ANCESTRAL):
            raise MethodUnavailableError(
                f"Strategy {strategy} does not sum over latent variables {latents}"
            )
        return score_with_latents(problem, latents, m_F, budget, workers)
    match strategy:
        case Strategy.AUTO:
            return _score_exact_auto(problem, m_F, budget, workers)
        case Strategy.FULL:
            return score_full_enumeration(problem, m_F, budget, workers)
        case Strategy.ANCESTRAL:
            return score_ancestral_enumeration(problem, m_F, budget, workers)
        case Strategy.COLLAPSED:
            return score_count_collapsed(problem, m_F, budget, workers)
        case Strategy.TREE:
            return tree_fastpath_score(problem, budget, m_F=m_F)
    raise ValueError(f"Invalid strategy specified: {strategy}")


def score_population_mixture(
    problem: SelectionProblem,
    budget: Budget = DEFAULT_BUDGET,
    strategy: Strategy | str = Strategy.AUTO,
    workers: int = 1,
) -> LogScore:
    """Mix per-m_F scores under P(m_F | M, K)."""
    strategy = Strategy(strategy)
    budget = _max_terms(budget)
    return mix_over_population(
        problem, lambda m_F: _score_at(problem, m_F, strategy, budget, workers)
    )


def mix_over_population(
    problem: SelectionProblem, score_at: Callable[[int], LogScore]
) -> LogScore:
    """Return log sum of P(m_F) * exp(score_at(m_F)) over candidates in ascending order.

    A single candidate returns its score untouched.
    """
    terms, methods = [], []
    for m_F, probability in problem.m_f_candidates().items():
        if probability <= 0:
            continue
        score = score_at(m_F)
        _LOGGER.debug("m_F=%s: %s (%s)", m_F, score.value, score.method)
        terms.append(math.log(probability) + score.value)
        if score.method not in methods:
            methods.append(score.method)
    if len(terms) == 1:
        return LogScore(terms[0], methods[0])
    return LogScore(log_sum_exp(terms), f"mixture[{','.join(methods)}]")


def marginal_likelihood(
    problem: SelectionProblem,
    strategy: Strategy | str = Strategy.AUTO,
    budget: Budget = DEFAULT_BUDGET,
    workers: int = 1,
) -> LogScore:
    """Return log P(D | M, K), summing over m_F and the chosen completions."""
    return score_population_mixture(problem, budget, strategy, workers)
