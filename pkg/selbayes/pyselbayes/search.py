"""Structure priors, exhaustive posteriors and greedy structure search."""

from __future__ import annotations

from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
import itertools
import logging
import math
from types import MappingProxyType

import networkx as nx
import numpy as np

from .const import (
    DEFAULT_BUDGET,
    DEFAULT_MAX_PARENTS,
    DEFAULT_RESTARTS,
    EXHAUSTIVE_MAX_DOMAIN,
)
from .exceptions import (
    BudgetExceededError,
    CycleError,
    MethodUnavailableError,
    SearchError,
)
from .graph import (
    Edge,
    NetworkStructure,
    Role,
    VariableSpec,
    ancestors,
    canonical_encoding,
)
from .scoring import LogScore, check_alpha, family_cells, family_log_score
from .selection import (
    Budget,
    SelectionProblem,
    Strategy,
    TermMode,
    marginal_likelihood,
    mix_over_population,
    score_parts,
    term_count,
)
from .transform import make_s_root
from .utils import log_sum_exp

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, kw_only=True)
class SearchConstraints:
    """Required and forbidden edges, selection and manipulation constraints.

    `fixed_s_parents` freezes every edge incident to S: its parents are
    exactly the listed variables and its only children are required ones.
    """

    required: frozenset[Edge] = frozenset()
    forbidden: frozenset[Edge] = frozenset()
    fixed_s_parents: tuple[str, ...] | None = None
    max_parents: int | None = DEFAULT_MAX_PARENTS
    manipulation_rooted: bool = True

    def __post_init__(self) -> None:
        """Validate the edge sets."""
        required = frozenset(tuple(e) for e in self.required)
        forbidden = frozenset(tuple(e) for e in self.forbidden)
        object.__setattr__(self, "required", required)
        object.__setattr__(self, "forbidden", forbidden)
        if self.fixed_s_parents is not None:
            object.__setattr__(self, "fixed_s_parents", tuple(self.fixed_s_parents))
        if overlap := required & forbidden:
            raise SearchError(f"Edges both required and forbidden: {sorted(overlap)}")
        graph = nx.DiGraph(sorted(required))
        if not nx.is_directed_acyclic_graph(graph):
            raise CycleError([(str(u), str(v)) for u, v, *_ in nx.find_cycle(graph)])
        if self.max_parents is not None and self.max_parents < 0:
            raise SearchError("Invalid max_parents specified")

    def fixed_edges(self, variables: Sequence[VariableSpec]) -> frozenset[Edge]:
        """Return edges every admissible structure contains."""
        edges = set(self.required)
        if (selection := _selection(variables)) is not None and self.fixed_s_parents is not None:
            edges.update((parent, selection) for parent in self.fixed_s_parents)
        if self.manipulation_rooted:
            edges.update(
                (v.name, v.target) for v in variables if v.role is Role.MANIPULATION
            )
        return frozenset(edges)

    def allowed(self, variables: Sequence[VariableSpec], edge: Edge) -> bool:
        """Return whether an edge may be present at all."""
        parent, child = edge
        if edge in self.forbidden or parent == child:
            return False
        roles = {v.name: v.role for v in variables}
        if self.manipulation_rooted and roles[child] is Role.MANIPULATION:
            return False
        if self.fixed_s_parents is not None and Role.SELECTION in (roles[parent], roles[child]):
            return edge in self.fixed_edges(variables)
        return True

    def candidate_pairs(self, variables: Sequence[VariableSpec]) -> list[tuple[Edge, ...]]:
        """Return per free variable pair the directions a search may choose."""
        fixed = {frozenset(edge) for edge in self.fixed_edges(variables)}
        pairs = []
        for first, second in itertools.combinations([v.name for v in variables], 2):
            if frozenset((first, second)) in fixed:
                continue
            options = tuple(
                e for e in ((first, second), (second, first)) if self.allowed(variables, e)
            )
            if options:
                pairs.append(options)
        return pairs

    def admissible(self, structure: NetworkStructure) -> bool:
        """Return whether a structure satisfies every constraint."""
        variables = structure.variables
        if not self.fixed_edges(variables) <= structure.edges:
            return False
        if not all(self.allowed(variables, edge) for edge in structure.edges):
            return False
        if self.max_parents is not None:
            selection = _selection(variables)
            for name in structure.names:
                if name == selection and self.fixed_s_parents is not None:
                    continue
                if len(structure.parents(name)) > self.max_parents:
                    return False
        return True


def _selection(variables: Sequence[VariableSpec]) -> str | None:
    return next((v.name for v in variables if v.role is Role.SELECTION), None)


class StructurePriorMode(StrEnum):
    """How P(M | K) is assigned."""

    UNIFORM = "uniform"
    EDGE = "edge"


@dataclass(frozen=True, kw_only=True)
class StructurePrior:
    """Uniform prior, or independent presence probabilities per candidate edge."""

    mode: StructurePriorMode = StructurePriorMode.UNIFORM
    edge_probabilities: Mapping[Edge, float] = field(default_factory=dict)
    default: float = 0.5

    def __post_init__(self) -> None:
        """Validate the probabilities."""
        object.__setattr__(self, "mode", StructurePriorMode(self.mode))
        probabilities = {tuple(k): float(v) for k, v in self.edge_probabilities.items()}
        for edge, probability in [(None, self.default), *probabilities.items()]:
            if not 0.0 < probability < 1.0:
                raise ValueError(f"Invalid edge probability specified for {edge}: {probability}")
        object.__setattr__(self, "edge_probabilities", MappingProxyType(probabilities))


def log_structure_prior(
    structure: NetworkStructure, prior: StructurePrior, constraints: SearchConstraints
) -> float:
    """Return log P(M | K) up to a constant; -inf for inadmissible structures."""
    if not constraints.admissible(structure):
        return -math.inf
    if prior.mode is StructurePriorMode.UNIFORM:
        return 0.0
    total = 0.0
    for options in constraints.candidate_pairs(structure.variables):
        for edge in options:
            probability = prior.edge_probabilities.get(edge, prior.default)
            total += math.log(probability if edge in structure.edges else 1.0 - probability)
    return total


@dataclass(frozen=True)
class ScoredStructure:
    """A structure with its log marginal likelihood, log prior and method tag."""

    structure: NetworkStructure
    log_marginal_likelihood: float
    log_structure_prior: float
    method: str
    posterior: float | None = None
    log_unnormalized_posterior: float = field(init=False)

    def __post_init__(self) -> None:
        """Sum the log terms."""
        object.__setattr__(
            self,
            "log_unnormalized_posterior",
            self.log_marginal_likelihood + self.log_structure_prior,
        )

    @property
    def encoding(self) -> str:
        """Return the canonical edge list."""
        return canonical_encoding(self.structure)


def _rank_key(scored: ScoredStructure) -> tuple[float, str]:
    return (-scored.log_unnormalized_posterior, scored.encoding)


class ScoreCache:
    """Memoized selection-aware scoring of many structures over one dataset.

    With selection the score splits into families outside {S} and the
    ancestors of S, which only the sampled cases reach, and a coupled term
    over {S} and its ancestors. Both are cached by family so rescoring a
    structure that differs by one edge recomputes only what changed.
    """

    def __init__(
        self,
        problem: SelectionProblem,
        strategy: Strategy | str = Strategy.AUTO,
        budget: Budget = DEFAULT_BUDGET,
        workers: int = 1,
    ) -> None:
        """Initialize the cache."""
        self._problem = problem
        self._strategy = Strategy(strategy)
        self._budget = budget
        self._workers = workers
        self._families: dict[tuple[str, tuple[str, ...]], float] = {}
        self._coupled: dict[tuple, float] = {}
        self._structures: dict[str, LogScore] = {}
        self.hits = 0
        self.misses = 0

    def score(self, structure: NetworkStructure) -> LogScore:
        """Return the log marginal likelihood of a structure."""
        key = canonical_encoding(structure)
        if (cached := self._structures.get(key)) is not None:
            self.hits += 1
            return cached
        self.misses += 1
        problem = self._problem.with_structure(structure)
        if self._decomposable(problem):
            score = mix_over_population(problem, lambda m_F: self._score_split(problem, m_F))
        else:
            score = marginal_likelihood(problem, self._strategy, self._budget, self._workers)
        self._structures[key] = score
        return score

    def _decomposable(self, problem: SelectionProblem) -> bool:
        if problem.structure.latent_names:
            return False
        if self._strategy in (Strategy.ANCESTRAL, Strategy.COLLAPSED):
            return True
        if self._strategy is not Strategy.AUTO:
            return False
        # leave closed-form tree scoring to the dispatcher
        return not (
            problem.prior.likelihood_equivalent
            and problem.structure.parents(problem.selection.name)
            and make_s_root(problem.structure).tree_valid
        )

    def _mode(self, problem: SelectionProblem, m_F: int) -> TermMode:
        if self._strategy is Strategy.ANCESTRAL:
            return TermMode.ANCESTRAL
        if self._strategy is Strategy.COLLAPSED:
            return TermMode.COLLAPSED
        budget = self._budget if isinstance(self._budget, int) else self._budget.max_terms
        for mode in (TermMode.COLLAPSED, TermMode.ANCESTRAL):
            try:
                if term_count(problem, mode, m_F) <= budget:
                    return mode
            except BudgetExceededError:
                continue
        raise MethodUnavailableError(
            f"No exact method fits the budget of {budget} terms at m_F={m_F}; "
            "use strategy bic for a heuristic score"
        )

    def _score_split(self, problem: SelectionProblem, m_F: int) -> LogScore:
        structure = problem.structure
        selection = problem.selection.name
        coupled = {selection} | ancestors(structure, selection)
        mode = self._mode(problem, m_F)
        key = (
            m_F,
            mode,
            tuple((name, structure.parents(name)) for name in structure.sorted_names(coupled)),
        )
        if (value := self._coupled.get(key)) is None:
            value = score_parts(
                problem, m_F, mode, self._budget, workers=self._workers, scope=coupled
            ).value
            self._coupled[key] = value
        total = value + math.fsum(
            self._family(problem, name) for name in structure.names if name not in coupled
        )
        if not structure.parents(selection):
            return LogScore(total, "direct")
        return LogScore(total, mode.value)

    def _family(self, problem: SelectionProblem, name: str) -> float:
        structure = problem.structure
        key = (name, structure.parents(name))
        if (value := self._families.get(key)) is None:
            alpha = problem.prior.family_alpha(structure, name, None)
            cells = family_cells(structure, problem.values, name)
            shape = (structure.row_count(name), structure.arity(name))
            counts = np.bincount(cells[cells >= 0], minlength=math.prod(shape)).reshape(shape)
            check_alpha(name, alpha, counts)
            value = float(family_log_score(alpha, counts))
            self._families[key] = value
        return value


def _structures(
    variables: Sequence[VariableSpec], constraints: SearchConstraints
) -> Iterator[NetworkStructure]:
    """Yield every admissible structure, choices made per pair in declaration order."""
    fixed = constraints.fixed_edges(variables)
    pairs = [(None, *options) for options in constraints.candidate_pairs(variables)]
    for choice in itertools.product(*pairs):
        edges = fixed | {edge for edge in choice if edge is not None}
        if not nx.is_directed_acyclic_graph(nx.DiGraph(sorted(edges))):
            continue
        structure = NetworkStructure(
            tuple(variables), frozenset(edges), constraints.manipulation_rooted
        )
        if constraints.admissible(structure):
            yield structure


@dataclass(frozen=True)
class PosteriorResult:
    """Ranked structures with normalized posteriors, and edge posteriors."""

    structures: tuple[ScoredStructure, ...]
    edge_probabilities: Mapping[Edge, float]


def _check_selection_prior(problem: SelectionProblem, constraints: SearchConstraints) -> None:
    if problem.prior.selection is not None and constraints.fixed_s_parents is None:
        raise SearchError("A selection prior requires the S parents to be fixed")


def exhaustive_posterior(
    problem: SelectionProblem,
    *,
    structure_prior: StructurePrior | None = None,
    constraints: SearchConstraints | None = None,
    budget: Budget = DEFAULT_BUDGET,
    strategy: Strategy | str = Strategy.AUTO,
    workers: int = 1,
) -> PosteriorResult:
    """Score every admissible structure over the problem's variables.

    The problem's structure supplies the variables only.
    """
    structure_prior = structure_prior or StructurePrior()
    constraints = constraints or SearchConstraints()
    variables = problem.structure.variables
    domain = [v.name for v in variables if v.role is Role.DOMAIN]
    if len(domain) > EXHAUSTIVE_MAX_DOMAIN:
        raise SearchError(
            f"{len(domain)} domain variables exceed the exhaustive limit of "
            f"{EXHAUSTIVE_MAX_DOMAIN}; use greedy search"
        )
    _check_selection_prior(problem, constraints)

    cache = ScoreCache(problem, strategy, budget, workers)
    scored = []
    for structure in _structures(variables, constraints):
        score = cache.score(structure)
        scored.append(
            ScoredStructure(
                structure,
                score.value,
                log_structure_prior(structure, structure_prior, constraints),
                score.method,
            )
        )
    if not scored:
        raise SearchError("No admissible structure")

    normalizer = log_sum_exp([s.log_unnormalized_posterior for s in scored])
    ranked = sorted(
        (
            ScoredStructure(
                s.structure,
                s.log_marginal_likelihood,
                s.log_structure_prior,
                s.method,
                math.exp(s.log_unnormalized_posterior - normalizer),
            )
            for s in scored
        ),
        key=_rank_key,
    )
    names = [v.name for v in variables]
    edge_probabilities = {
        edge: math.fsum(s.posterior for s in ranked if edge in s.structure.edges)
        for edge in itertools.permutations(names, 2)
    }
    _LOGGER.debug("Scored %s structures (%s cache hits)", len(ranked), cache.hits)
    return PosteriorResult(tuple(ranked), MappingProxyType(edge_probabilities))


@dataclass(frozen=True)
class SearchMove:
    """An accepted step of the hill climber."""

    restart: int
    operation: str
    edge: Edge | None
    score: float


@dataclass(frozen=True)
class SearchResult:
    """Best structure found and every accepted move."""

    best: ScoredStructure
    trace: tuple[SearchMove, ...]
    evaluated: int


def _random_structure(
    variables: Sequence[VariableSpec], constraints: SearchConstraints, rng: np.random.Generator
) -> NetworkStructure:
    """Return a random admissible structure grown from the fixed edges."""
    ranks = rng.permutation(len(variables))
    order = {v.name: int(rank) for v, rank in zip(variables, ranks, strict=True)}
    structure = NetworkStructure(
        tuple(variables), constraints.fixed_edges(variables), constraints.manipulation_rooted
    )
    for options in constraints.candidate_pairs(variables):
        if rng.random() >= 0.5:
            continue
        forward = [e for e in options if order[e[0]] < order[e[1]]]
        edge = forward[0] if forward else options[0]
        candidate = _try_edges(structure, structure.edges | {edge}, constraints)
        if candidate is not None:
            structure = candidate
    return structure


def _try_edges(
    structure: NetworkStructure, edges: frozenset[Edge], constraints: SearchConstraints
) -> NetworkStructure | None:
    if not nx.is_directed_acyclic_graph(nx.DiGraph(sorted(edges))):
        return None
    candidate = NetworkStructure(structure.variables, edges, structure.manipulation_rooted)
    return candidate if constraints.admissible(candidate) else None


def _neighbors(
    structure: NetworkStructure, constraints: SearchConstraints
) -> Iterator[tuple[str, Edge, NetworkStructure]]:
    """Yield add, delete and reverse moves over the free pairs."""
    edges = structure.edges
    for options in constraints.candidate_pairs(structure.variables):
        present = next((e for e in options if e in edges), None)
        if present is None:
            moves = [("add", e, edges | {e}) for e in options]
        else:
            moves = [("delete", present, edges - {present})]
            flipped = (present[1], present[0])
            if flipped in options:
                moves.append(("reverse", present, (edges - {present}) | {flipped}))
        for operation, edge, new_edges in moves:
            if (candidate := _try_edges(structure, new_edges, constraints)) is not None:
                yield operation, edge, candidate


def greedy_search(
    problem: SelectionProblem,
    *,
    structure_prior: StructurePrior | None = None,
    constraints: SearchConstraints | None = None,
    restarts: int = DEFAULT_RESTARTS,
    seed: int,
    budget: Budget = DEFAULT_BUDGET,
    strategy: Strategy | str = Strategy.AUTO,
    workers: int = 1,
) -> SearchResult:
    """Best-improvement hill climbing with seeded random restarts.

    The first climb starts from the fixed edges alone; later ones from
    random admissible structures drawn from a PCG64 stream seeded by `seed`.
    """
    if restarts < 1:
        raise SearchError("Invalid restarts specified")
    structure_prior = structure_prior or StructurePrior()
    constraints = constraints or SearchConstraints()
    _check_selection_prior(problem, constraints)
    variables = problem.structure.variables

    try:
        start = NetworkStructure(
            tuple(variables), constraints.fixed_edges(variables), constraints.manipulation_rooted
        )
    except CycleError as err:
        raise SearchError(f"No admissible starting structure: {err}") from err
    if not constraints.admissible(start):
        raise SearchError("No admissible starting structure")

    cache = ScoreCache(problem, strategy, budget, workers)
    rng = np.random.Generator(np.random.PCG64(seed))

    def evaluate(structure: NetworkStructure) -> ScoredStructure:
        score = cache.score(structure)
        return ScoredStructure(
            structure,
            score.value,
            log_structure_prior(structure, structure_prior, constraints),
            score.method,
        )

    best: ScoredStructure | None = None
    trace: list[SearchMove] = []
    for restart in range(restarts):
        if restart:
            start = _random_structure(variables, constraints, rng)
        current = evaluate(start)
        trace.append(SearchMove(restart, "start", None, current.log_unnormalized_posterior))
        while True:
            step = None
            for operation, edge, candidate in _neighbors(current.structure, constraints):
                try:
                    scored = evaluate(candidate)
                except (BudgetExceededError, MethodUnavailableError) as err:
                    _LOGGER.debug("Skipping %s: %s", canonical_encoding(candidate), err)
                    continue
                if step is None or _rank_key(scored) < _rank_key(step[2]):
                    step = (operation, edge, scored)
            if step is None or (
                step[2].log_unnormalized_posterior <= current.log_unnormalized_posterior
            ):
                break
            operation, edge, current = step
            trace.append(SearchMove(restart, operation, edge, current.log_unnormalized_posterior))
        if best is None or _rank_key(current) < _rank_key(best):
            best = current
        _LOGGER.debug(
            "Restart %s ended at %s with %s",
            restart,
            current.encoding,
            current.log_unnormalized_posterior,
        )
    return SearchResult(best, tuple(trace), cache.misses)
