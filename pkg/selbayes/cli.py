"""Command line for selection-aware scoring, search and simulation."""

from __future__ import annotations

import argparse
from collections.abc import Callable, Sequence
import logging
import math
import os
import sys
import time
from typing import Final

import colorlog
import numpy as np

from .const import (
    DEFAULT_LOG_LEVEL,
    DOMAIN,
    EXIT_BUDGET,
    EXIT_DATA,
    EXIT_ERROR,
    EXIT_OK,
    EXIT_USAGE,
    LOG_ENV,
    LOG_FORMAT,
)
from .helpers import (
    NetworkSpec,
    blank_records,
    file_digest,
    frame_text,
    load_constraints,
    load_dataset,
    load_network_spec,
    load_population,
    population_for,
    simulate_population,
    truth_path,
    write_text,
)
from .pyselbayes.const import DEFAULT_BUDGET, DEFAULT_RESTARTS
from .pyselbayes.exceptions import (
    BudgetExceededError,
    DataError,
    MethodUnavailableError,
    PriorError,
    SelBayesError,
    SpecError,
    StructureError,
)
from .pyselbayes.graph import d_separated, parameter_count
from .pyselbayes.search import PosteriorResult, exhaustive_posterior, greedy_search
from .pyselbayes.selection import (
    EnumerationBudget,
    SelectionProblem,
    Strategy,
    TermMode,
    marginal_likelihood,
    term_count,
)
from .pyselbayes.simulate import project
from .pyselbayes.transform import bic_heuristic_score, make_s_root
from .report import RunReport, edge_list, structure_summary

_LOGGER = logging.getLogger(__name__)


class UsageError(Exception):
    """Arguments are individually valid but do not make a runnable command."""


ERROR_CATEGORIES: Final = (
    (UsageError, "usage error", EXIT_USAGE),
    (SpecError, "spec error", EXIT_USAGE),
    (StructureError, "structure error", EXIT_USAGE),
    (DataError, "data error", EXIT_DATA),
    (PriorError, "prior error", EXIT_DATA),
    (BudgetExceededError, "budget error", EXIT_BUDGET),
    (MethodUnavailableError, "method error", EXIT_BUDGET),
    (SelBayesError, "error", EXIT_ERROR),
    (ValueError, "error", EXIT_ERROR),
)


def setup_logging() -> None:
    """Send selbayes logs to stderr at the level named by SELBAYES_LOG."""
    name = os.environ.get(LOG_ENV, DEFAULT_LOG_LEVEL).strip().upper()
    level = logging.getLevelNamesMapping().get(name)
    handler = colorlog.StreamHandler()
    handler.setFormatter(
        colorlog.ColoredFormatter(LOG_FORMAT, no_color=not sys.stderr.isatty())
    )
    logger = logging.getLogger(DOMAIN)
    logger.handlers[:] = [handler]
    logger.propagate = False
    logger.setLevel(DEFAULT_LOG_LEVEL.upper() if level is None else level)
    if level is None:
        _LOGGER.warning("Unknown %s level %s, using %s", LOG_ENV, name, DEFAULT_LOG_LEVEL)


def _problem(args: argparse.Namespace, report: RunReport) -> tuple[NetworkSpec, SelectionProblem]:
    spec = load_network_spec(args.network)
    dataset = load_dataset(args.data, spec.structure)
    report.inputs.update(network=spec.digest, data=file_digest(args.data))
    report.diagnostics.extend(spec.defaults)
    population = population_for(spec, dataset, getattr(args, "mf", None))
    return spec, SelectionProblem(spec.structure, spec.prior, dataset, population)


def _term_counts(problem: SelectionProblem) -> dict[str, int | str]:
    if problem.population.point_mass is None:
        return {}
    counts: dict[str, int | str] = {}
    for mode in TermMode:
        try:
            counts[mode.value] = term_count(problem, mode)
        except BudgetExceededError:
            counts[mode.value] = "more than 2^63"
    return counts


def _score(args: argparse.Namespace, report: RunReport) -> str | None:
    _, problem = _problem(args, report)
    score = marginal_likelihood(
        problem, args.strategy, EnumerationBudget(args.budget), args.workers
    )
    report.add_method(score.method)
    report.results.update(
        log_marginal_likelihood=score.value,
        method=score.method,
        m_T=problem.m_T,
        m_F_prior=problem.m_f_candidates(),
        term_counts=_term_counts(problem),
    )
    return None


def _posterior_results(result: PosteriorResult, top: int | None) -> dict:
    structures = result.structures if top is None else result.structures[:top]
    return {
        "structures": [
            {
                "rank": rank,
                **structure_summary(scored.structure),
                "log_marginal_likelihood": scored.log_marginal_likelihood,
                "log_structure_prior": scored.log_structure_prior,
                "posterior": scored.posterior,
                "method": scored.method,
            }
            for rank, scored in enumerate(structures, start=1)
        ],
        "structure_count": len(result.structures),
        "posterior_total": math.fsum(s.posterior for s in result.structures),
        "edge_probabilities": {
            f"{parent}->{child}": probability
            for (parent, child), probability in sorted(result.edge_probabilities.items())
            if probability > 0
        },
    }


def _exhaustive(args: argparse.Namespace, report: RunReport) -> str | None:
    _, problem = _problem(args, report)
    constraints, structure_prior = load_constraints(args.constraints)
    if args.constraints:
        report.inputs["constraints"] = file_digest(args.constraints)
    result = exhaustive_posterior(
        problem,
        structure_prior=structure_prior,
        constraints=constraints,
        budget=EnumerationBudget(args.budget),
        strategy=args.strategy,
        workers=args.workers,
    )
    for scored in result.structures:
        report.add_method(scored.method)
    report.results.update(_posterior_results(result, args.top))
    return None


def _search(args: argparse.Namespace, report: RunReport) -> str | None:
    if args.mode == "exhaustive":
        return _exhaustive(args, report)
    if args.seed is None:
        raise UsageError("--seed is required for greedy search")
    _, problem = _problem(args, report)
    constraints, structure_prior = load_constraints(args.constraints)
    if args.constraints:
        report.inputs["constraints"] = file_digest(args.constraints)
    report.seed = args.seed
    result = greedy_search(
        problem,
        structure_prior=structure_prior,
        constraints=constraints,
        restarts=args.restarts,
        seed=args.seed,
        budget=EnumerationBudget(args.budget),
        strategy=args.strategy,
        workers=args.workers,
    )
    best = result.best
    report.add_method(best.method)
    report.results.update(
        best={
            **structure_summary(best.structure),
            "log_marginal_likelihood": best.log_marginal_likelihood,
            "log_structure_prior": best.log_structure_prior,
            "log_unnormalized_posterior": best.log_unnormalized_posterior,
            "method": best.method,
        },
        trace=[
            {
                "restart": move.restart,
                "operation": move.operation,
                "edge": None if move.edge is None else edge_list([move.edge])[0],
                "score": move.score,
            }
            for move in result.trace
        ],
        evaluated=result.evaluated,
    )
    return None


def _simulate(args: argparse.Namespace, report: RunReport) -> str | None:
    spec = load_network_spec(args.network)
    network = spec.require_network()
    report.inputs["network"] = spec.digest
    report.seed = args.seed
    if args.manipulation:
        report.inputs["manipulation"] = file_digest(args.manipulation)
    if args.selection:
        report.inputs["selection"] = file_digest(args.selection)
    population = simulate_population(
        network, args.n, args.seed, args.manipulation, args.selection
    )
    mechanism = population.mechanism

    text = frame_text(
        population.records(),
        network.structure.names,
        {"seed": args.seed, "network": network.fingerprint(), "mechanism": mechanism},
    )
    report.results.update(cases=len(population), mechanism=mechanism)
    if (selection_spec := network.structure.selection) is not None:
        counts = np.bincount(population.column(selection_spec.name), minlength=selection_spec.arity)
        report.results["selection_counts"] = dict(
            zip(selection_spec.states, counts.tolist(), strict=True)
        )
    if args.out is None:
        return text
    write_text(args.out, text)
    report.results["population_file"] = args.out
    return None


def _project(args: argparse.Namespace, report: RunReport) -> str | None:
    spec = load_network_spec(args.network)
    population = load_population(args.population, spec.require_network())
    report.inputs.update(network=spec.digest, population=file_digest(args.population))
    dataset, population_spec, truth = project(population)
    m_F = population_spec.point_mass
    report.results.update(m_T=len(dataset), m_F=m_F, latent=list(truth.latent))
    text = frame_text(
        dataset.records() + blank_records(dataset, spec.structure, m_F),
        dataset.names,
        {"m_T": len(dataset), "m_F": m_F},
    )
    if args.out is None:
        return text
    write_text(args.out, text)
    archive = truth_path(args.out)
    write_text(
        archive,
        frame_text(
            truth.population.records(),
            spec.structure.names,
            {
                "archive": "ground truth",
                "network": truth.population.network.fingerprint(),
                "population": report.inputs["population"],
            },
        ),
    )
    report.results.update(data_file=args.out, ground_truth_file=str(archive))
    return None


def _reverse(args: argparse.Namespace, report: RunReport) -> str | None:
    spec = load_network_spec(args.network)
    report.inputs["network"] = spec.digest
    plan = make_s_root(spec.structure)
    report.results.update(
        reversed=[f"{parent}->{child}" for parent, child in plan.reversed_edges],
        result=structure_summary(plan.result),
        tree_valid=plan.tree_valid,
        parameter_count={
            "original": parameter_count(plan.original),
            "reversed": parameter_count(plan.result),
        },
        manipulation_rooted=plan.result.manipulation_rooted,
    )
    return None


def _bic(args: argparse.Namespace, report: RunReport) -> str | None:
    _, problem = _problem(args, report)
    bic = bic_heuristic_score(problem)
    report.add_method(Strategy.BIC.value)
    report.diagnostics.extend(bic.diagnostics)
    report.results.update(
        log_likelihood=bic.log_likelihood,
        param_count=bic.param_count,
        bic=bic.bic,
        sample_size=bic.sample_size,
        reversed_structure=structure_summary(bic.structure),
    )
    return None


def _dsep(args: argparse.Namespace, report: RunReport) -> str | None:
    spec = load_network_spec(args.network)
    report.inputs["network"] = spec.digest
    given = [name.strip() for name in args.given.split(",") if name.strip()]
    report.results.update(
        x=args.x,
        y=args.y,
        given=given,
        d_separated=d_separated(spec.structure, args.x, args.y, given),
    )
    return None


COMMANDS: Final[dict[str, Callable[[argparse.Namespace, RunReport], str | None]]] = {
    "score": _score,
    "posterior": _exhaustive,
    "search": _search,
    "simulate": _simulate,
    "project": _project,
    "reverse": _reverse,
    "bic": _bic,
    "dsep": _dsep,
}


def _positive(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"invalid positive value: {value}")
    return number


def _count(value: str) -> int:
    number = int(value)
    if number < 0:
        raise argparse.ArgumentTypeError(f"invalid count: {value}")
    return number


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser."""
    parser = argparse.ArgumentParser(
        prog=DOMAIN, description="Bayesian scoring of causal networks under selection"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    network = argparse.ArgumentParser(add_help=False)
    network.add_argument("--network", required=True, help="network file or builtin:<name>")
    output = argparse.ArgumentParser(add_help=False)
    output.add_argument("--out", help="also write the report to this file")
    output.add_argument("--timing", action="store_true", help="include wall-clock time")
    scoring = argparse.ArgumentParser(add_help=False)
    scoring.add_argument("--data", required=True)
    scoring.add_argument("--strategy", choices=[s.value for s in Strategy], default="auto")
    scoring.add_argument("--budget", type=_positive, default=DEFAULT_BUDGET)
    scoring.add_argument("--workers", type=_positive, default=1)
    searching = argparse.ArgumentParser(add_help=False)
    searching.add_argument("--constraints")
    searching.add_argument("--top", type=_positive)

    score = commands.add_parser("score", parents=[network, scoring, output])
    score.add_argument("--mf", type=_count, help="override the number of unsampled cases")
    commands.add_parser("posterior", parents=[network, scoring, searching, output])
    search = commands.add_parser("search", parents=[network, scoring, searching, output])
    search.add_argument("--mode", choices=["exhaustive", "greedy"], default="greedy")
    search.add_argument("--restarts", type=_positive, default=DEFAULT_RESTARTS)
    search.add_argument("--seed", type=_count)

    simulate = commands.add_parser("simulate", parents=[network])
    simulate.add_argument("--n", type=_count, required=True)
    simulate.add_argument("--selection", help="selection mechanism file")
    simulate.add_argument("--manipulation", help="manipulation design file")
    simulate.add_argument("--seed", type=_count, required=True)
    simulate.add_argument("--out", help="population file; standard output by default")
    simulate.add_argument("--timing", action="store_true")

    project_parser = commands.add_parser("project", parents=[network])
    project_parser.add_argument("--population", required=True)
    project_parser.add_argument("--out", help="data file; standard output by default")
    project_parser.add_argument("--timing", action="store_true")

    commands.add_parser("reverse", parents=[network, output])
    bic = commands.add_parser("bic", parents=[network, output])
    bic.add_argument("--data", required=True)
    bic.add_argument("--mf", type=_count, help="override the number of unsampled cases")
    dsep = commands.add_parser("dsep", parents=[network, output])
    dsep.add_argument("--x", required=True)
    dsep.add_argument("--y", required=True)
    dsep.add_argument("--given", default="")
    return parser


def execute(argv: Sequence[str]) -> tuple[RunReport | None, str | None, int]:
    """Run one command line.

    Returns the report, any text the command writes to standard output in
    place of it, and the exit status.
    """
    try:
        args = build_parser().parse_args(list(argv))
    except SystemExit as err:
        return None, None, EXIT_OK if err.code in (0, None) else EXIT_USAGE

    report = RunReport(command=list(argv))
    started = time.perf_counter()
    try:
        text = COMMANDS[args.command](args, report)
    except Exception as err:
        for error_type, label, status in ERROR_CATEGORIES:
            if isinstance(err, error_type):
                print(f"{DOMAIN}: {label}: {err}", file=sys.stderr)
                _LOGGER.debug("%s failed", args.command, exc_info=True)
                return None, None, status
        raise
    if args.timing:
        report.wall_clock = time.perf_counter() - started
    if text is None and getattr(args, "out", None) and args.command not in (
        "simulate",
        "project",
    ):
        write_text(args.out, report.to_json())
    return report, text, EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point."""
    setup_logging()
    report, text, status = execute(sys.argv[1:] if argv is None else argv)
    if text is not None:
        sys.stdout.write(text)
    elif report is not None:
        sys.stdout.write(report.to_json())
    return status
