"""Helpers for loading documents and data files."""

from __future__ import annotations

import csv
from dataclasses import dataclass
import io
import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import voluptuous as vol

from .const import BUILTIN_PREFIX, TRUTH_SUFFIX
from .pyselbayes import NETWORKS
from .pyselbayes.const import DEFAULT_ESS, MISSING, MISSING_LABEL
from .pyselbayes.exceptions import (
    DataError,
    PriorError,
    SimulationError,
    SpecError,
    StructureError,
)
from .pyselbayes.graph import GeneratingNetwork, NetworkStructure, VariableSpec
from .pyselbayes.priors import (
    BdeSpec,
    PriorMode,
    PriorModel,
    SelectionPriorSpec,
    SelectionTable,
    build_selection_prior,
    validate_prior,
)
from .pyselbayes.scoring import Dataset, PopulationSpec
from .pyselbayes.search import SearchConstraints, StructurePrior
from .pyselbayes.simulate import (
    Condition,
    GroundTruth,
    ManipulationDesign,
    ManipulationPlan,
    Population,
    Quota,
    SelectionMechanism,
    apply_manipulation,
    apply_selection,
    forward_sample,
)
from .pyselbayes.utils import stable_hash
from .schema import CONSTRAINTS_SCHEMA, DESIGN_SCHEMA, MECHANISM_SCHEMA, NETWORK_SCHEMA

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """A validated network document."""

    structure: NetworkStructure
    prior: PriorModel
    network: GeneratingNetwork | None
    population: PopulationSpec | None
    description: str | None
    digest: str
    defaults: tuple[str, ...] = ()

    def require_network(self) -> GeneratingNetwork:
        """Return the generating network or raise when the document has no tables."""
        if self.network is None:
            raise SpecError(["cpts: probability tables are required for this command"])
        return self.network


def read_document(source: str | Path) -> tuple[dict[str, Any], str]:
    """Return a parsed JSON document and the sha256 of its content.

    `builtin:<name>` reads one of the bundled networks.
    """
    source = str(source)
    if source.startswith(BUILTIN_PREFIX):
        name = source.removeprefix(BUILTIN_PREFIX)
        if name not in NETWORKS:
            raise SpecError([f"unknown built-in network '{name}'; known: {sorted(NETWORKS)}"])
        document = NETWORKS[name]
        return document, stable_hash(json.dumps(document, sort_keys=True))
    try:
        content = Path(source).read_bytes()
    except OSError as err:
        raise SpecError([err.strerror or str(err)], source) from err
    try:
        document = json.loads(content)
    except json.JSONDecodeError as err:
        raise SpecError([f"line {err.lineno} column {err.colno}: {err.msg}"], source) from err
    return document, stable_hash(content)


def validate_document(schema: vol.Schema, document: Any, source: str) -> dict[str, Any]:
    """Validate a document, reporting every schema violation with its location."""
    try:
        return schema(document)
    except vol.MultipleInvalid as err:
        raise SpecError(
            sorted(
                f"{'.'.join(str(p) for p in error.path) or '<root>'}: {error.msg}"
                for error in err.errors
            ),
            source,
        ) from err


def _prior_model(
    document: dict[str, Any], structure: NetworkStructure, errors: list[str]
) -> PriorModel | None:
    reported = len(errors)
    priors = document["priors"]
    mode = PriorMode(priors["mode"])
    prior_joint = None
    if (prior_network := priors.get("prior_network")) is not None:
        try:
            prior_joint = GeneratingNetwork(
                NetworkStructure(
                    structure.variables,
                    frozenset(map(tuple, prior_network["edges"])),
                    structure.manipulation_rooted,
                ),
                prior_network["cpts"],
            )
        except (StructureError, ValueError) as err:
            errors.append(f"priors.prior_network: {err}")

    tables = None
    if mode is PriorMode.EXPLICIT:
        if "tables" not in priors:
            errors.append("priors.tables: required for explicit priors")
        else:
            tables = {name: np.array(rows, dtype=float) for name, rows in priors["tables"].items()}
            errors.extend(
                f"priors.tables.{diagnostic}"
                for diagnostic in validate_prior(tables, structure)
            )

    selection = None
    if (section := document.get("selection_prior")) is not None:
        try:
            selection = SelectionPriorSpec(
                tuple(section["parents"]),
                {
                    m_F: SelectionTable(table["means"], table["ess"])
                    for m_F, table in section["per_mF"].items()
                },
            )
        except PriorError as err:
            errors.append(f"selection_prior: {err}")
        else:
            for m_F in selection.per_mf:
                try:
                    build_selection_prior(structure, selection, m_F)
                except (PriorError, StructureError) as err:
                    errors.append(f"selection_prior.per_mF.{m_F}: {err}")

    if len(errors) > reported:
        return None
    try:
        return PriorModel(
            mode=mode,
            bde=BdeSpec(priors.get("ess", DEFAULT_ESS), prior_joint),
            tables=tables,
            alpha=priors.get("alpha", DEFAULT_ESS),
            selection=selection,
        )
    except PriorError as err:
        errors.append(f"priors: {err}")
    return None


def _population(section: dict[str, Any] | None, errors: list[str]) -> PopulationSpec | None:
    if section is None:
        return None
    try:
        if "m_F_prior" in section:
            return PopulationSpec(section["m_F_prior"], section.get("per_structure", {}))
        return PopulationSpec({section.get("m_F", 0): 1.0}, section.get("per_structure", {}))
    except DataError as err:
        errors.append(f"population: {err}")
    return None


def load_network_spec(source: str | Path) -> NetworkSpec:
    """Load and validate a network document, collecting every error."""
    source = str(source)
    raw, digest = read_document(source)
    document = validate_document(NETWORK_SCHEMA, raw, source)
    errors: list[str] = []

    variables = []
    for i, item in enumerate(document["variables"]):
        try:
            variables.append(VariableSpec(**item))
        except StructureError as err:
            errors.append(f"variables.{i}: {err}")
    declared = {item["name"] for item in document["variables"]}
    for i, (parent, child) in enumerate(document["edges"]):
        for name in (parent, child):
            if name not in declared:
                errors.append(f"edges.{i}: undeclared variable {name}")
    if errors:
        raise SpecError(errors, source)

    try:
        structure = NetworkStructure(
            tuple(variables), frozenset(map(tuple, document["edges"]))
        )
    except StructureError as err:
        raise SpecError([f"edges: {err}"], source) from err

    network = None
    if (cpts := document.get("cpts")) is not None:
        try:
            network = GeneratingNetwork(structure, cpts)
        except (StructureError, ValueError) as err:
            errors.append(f"cpts: {err}")
    prior = _prior_model(document, structure, errors)
    population = _population(document.get("population"), errors)
    if errors:
        raise SpecError(errors, source)

    priors = document["priors"]
    defaults = tuple(
        f"priors.{key}: not given, using {DEFAULT_ESS}"
        for key, mode in (("ess", PriorMode.BDE), ("alpha", PriorMode.K2))
        if prior.mode is mode and key not in priors
    )
    _LOGGER.debug("Loaded %s: %s variables", source, len(variables))
    return NetworkSpec(
        structure, prior, network, population, document.get("description"), digest, defaults
    )


def _read_frame(path: str | Path) -> pd.DataFrame:
    """Read a comma-separated file; only whole lines starting with '#' are comments."""
    try:
        lines = Path(path).read_text(encoding="utf8").splitlines()
    except OSError as err:
        raise DataError(f"{path}: {err.strerror or err}") from err
    kept = "\n".join(line for line in lines if not line.lstrip().startswith("#"))
    try:
        frame = pd.read_csv(
            io.StringIO(kept),
            dtype=str,
            keep_default_na=False,
            comment=None,
            quoting=csv.QUOTE_NONE,
            skipinitialspace=True,
        )
    except pd.errors.EmptyDataError as err:
        raise DataError(f"{path}: no header row") from err
    except pd.errors.ParserError as err:
        raise DataError(f"{path}: {err}") from err
    frame.columns = [str(column).strip() for column in frame.columns]
    for column in frame.columns:
        frame[column] = frame[column].str.strip()
    return frame


def _values(frame: pd.DataFrame, structure: NetworkStructure, path: str | Path) -> np.ndarray:
    columns = set(frame.columns)
    if missing := [n for n in structure.names if n not in columns]:
        raise DataError(f"{path}: missing columns {missing}")
    if extra := sorted(columns.difference(structure.names)):
        raise DataError(f"{path}: undeclared columns {extra}")
    values = np.full((len(frame), len(structure.names)), MISSING, dtype=np.int64)
    for i, variable in enumerate(structure.variables):
        lookup = {state: k for k, state in enumerate(variable.states)}
        for row, label in enumerate(frame[variable.name].tolist()):
            if label == MISSING_LABEL:
                continue
            if (state := lookup.get(label)) is None:
                raise DataError(
                    f"{path}: row {row + 1}, column {variable.name}: unknown state '{label}'"
                )
            values[row, i] = state
    return values


def load_dataset(path: str | Path, structure: NetworkStructure) -> Dataset:
    """Load a delimited data file; '?' marks a missing value.

    Rows whose selection value is the unsampled state are dropped and
    counted in `Dataset.unsampled`.
    """
    values = _values(_read_frame(path), structure, path)
    unsampled = 0
    if (selection := structure.selection) is not None:
        column = values[:, structure.position(selection.name)]
        if (column == MISSING).any():
            row = int(np.argmax(column == MISSING))
            raise DataError(
                f"{path}: row {row + 1}: {selection.name} is missing, but S never has a "
                "missing value"
            )
        keep = column != selection.unsampled_index
        unsampled = int((~keep).sum())
        values = values[keep]
    _LOGGER.debug("Read %s cases and %s unsampled rows from %s", len(values), unsampled, path)
    return Dataset(structure.variables, values, unsampled)


def population_for(
    spec: NetworkSpec, dataset: Dataset, m_F: int | None = None
) -> PopulationSpec:
    """Return the population prior of a run.

    Explicit unsampled rows add to the document's population section, which
    defaults to none beyond them. `m_F` overrides both.
    """
    if m_F is not None:
        return PopulationSpec.point(m_F)
    if spec.population is None:
        return PopulationSpec.point(dataset.unsampled)
    return spec.population.shifted(dataset.unsampled)


def load_population(path: str | Path, network: GeneratingNetwork) -> Population:
    """Load a complete population file written by the simulate command."""
    values = _values(_read_frame(path), network.structure, path)
    if (values == MISSING).any():
        raise DataError(f"{path}: population files must be complete")
    return Population(network, values)


def truth_path(out: str | Path) -> Path:
    """Return the ground-truth archive path kept beside a projected data file."""
    out = Path(out)
    return out.with_name(out.name.removesuffix(out.suffix) + TRUTH_SUFFIX)


def load_ground_truth(path: str | Path, network: GeneratingNetwork) -> GroundTruth:
    """Load a ground-truth archive written by the project command."""
    return GroundTruth.from_population(load_population(path, network))


def simulate_population(
    network: GeneratingNetwork,
    n: int,
    seed: int,
    manipulation: str | Path | None = None,
    selection: str | Path | None = None,
) -> Population:
    """Forward sample, then manipulate, then select.

    Each stage draws from its own sub-seed of `seed`, so adding a stage leaves
    the others unchanged.
    """
    forward_seed, manipulation_seed, selection_seed = (
        int(s) for s in np.random.SeedSequence(seed).generate_state(3)
    )
    population = forward_sample(network, n, forward_seed)
    if manipulation is not None:
        population = apply_manipulation(population, load_design(manipulation), manipulation_seed)
    if selection is not None:
        population = apply_selection(population, load_mechanism(selection), selection_seed)
    return population


def load_constraints(source: str | Path | None) -> tuple[SearchConstraints, StructurePrior]:
    """Load search constraints and the structure prior; none means defaults."""
    if source is None:
        return SearchConstraints(), StructurePrior()
    raw, _ = read_document(source)
    document = validate_document(CONSTRAINTS_SCHEMA, raw, str(source))
    structure_prior = document["structure_prior"]
    fixed = document["fixed_s_parents"]
    return (
        SearchConstraints(
            required=frozenset(map(tuple, document["required"])),
            forbidden=frozenset(map(tuple, document["forbidden"])),
            fixed_s_parents=None if fixed is None else tuple(fixed),
            max_parents=document["max_parents"],
            manipulation_rooted=document["manipulation_rooted"],
        ),
        StructurePrior(
            mode=structure_prior["mode"],
            edge_probabilities={
                (parent, child): probability
                for parent, child, probability in structure_prior["edge_probabilities"]
            },
            default=structure_prior["default"],
        ),
    )


def _mechanism(document: dict[str, Any]) -> SelectionMechanism:
    return SelectionMechanism(
        kind=document["kind"],
        quotas=tuple(
            Quota(
                quota["state"],
                quota["count"],
                tuple(Condition(c["variable"], tuple(c["states"])) for c in quota["conditions"]),
            )
            for quota in document["quotas"]
        ),
        parts=tuple(_mechanism(part) for part in document["parts"]),
        combined={frozenset(item["states"]): item["state"] for item in document["combined"]},
    )


def load_mechanism(source: str | Path | None) -> SelectionMechanism:
    """Load a selection mechanism; none means sampling S from its CPT."""
    if source is None:
        return SelectionMechanism(kind="mechanistic")
    raw, _ = read_document(source)
    try:
        return _mechanism(validate_document(MECHANISM_SCHEMA, raw, str(source)))
    except SimulationError as err:
        raise SpecError([str(err)], str(source)) from err


def load_design(source: str | Path) -> ManipulationDesign:
    """Load a manipulation design."""
    raw, _ = read_document(source)
    document = validate_document(DESIGN_SCHEMA, raw, str(source))
    try:
        return ManipulationDesign(
            tuple(
                ManipulationPlan(
                    variable=plan["variable"],
                    assignment=plan["assignment"],
                    fraction=plan["fraction"],
                    count=plan.get("count"),
                    compliance=plan["compliance"],
                )
                for plan in document["plans"]
            )
        )
    except SimulationError as err:
        raise SpecError([str(err)], str(source)) from err


def frame_text(
    records: list[dict[str, str]], columns: tuple[str, ...], header: dict[str, Any]
) -> str:
    """Return CSV text with '#' metadata lines ahead of the header row."""
    buffer = io.StringIO()
    for key, value in header.items():
        buffer.write(f"# {key}: {value}\n")
    pd.DataFrame.from_records(records, columns=list(columns)).to_csv(
        buffer, index=False, lineterminator="\n"
    )
    return buffer.getvalue()


def write_text(path: str | Path, text: str) -> None:
    """Write text to a declared output path."""
    Path(path).write_text(text, encoding="utf8", newline="")


def blank_records(
    dataset: Dataset, structure: NetworkStructure, count: int
) -> list[dict[str, str]]:
    """Return explicit unsampled rows: S unsampled, everything else '?'."""
    selection = structure.selection
    return [
        {
            name: selection.unsampled if name == selection.name else MISSING_LABEL
            for name in dataset.names
        }
        for _ in range(count)
    ]


def file_digest(path: str | Path) -> str:
    """Return the sha256 of a file's content."""
    try:
        return stable_hash(Path(path).read_bytes())
    except OSError as err:
        raise DataError(f"{path}: {err.strerror or err}") from err
