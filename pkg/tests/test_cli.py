"""Test the command line and the document loaders."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import pytest

from selbayes.cli import execute, setup_logging
from selbayes.const import DOMAIN, EXIT_BUDGET, EXIT_DATA, EXIT_OK, EXIT_USAGE, LOG_ENV
from selbayes.helpers import (
    frame_text,
    load_dataset,
    load_ground_truth,
    load_network_spec,
    load_population,
)
from selbayes.pyselbayes.exceptions import DataError, SpecError
from selbayes.pyselbayes.graph import VariableSpec

from .common import CONFIG, binary, structure

S_ROOT = {
    "variables": [
        {"name": "X", "states": ["T", "F"]},
        {"name": "S", "role": "selection", "states": ["T", "F"]},
    ],
    "edges": [["S", "X"]],
}

PAIR = {
    "variables": [
        {"name": "X", "states": ["T", "F"]},
        {"name": "Y", "states": ["T", "F"]},
        {"name": "S", "role": "selection", "states": ["T", "F"]},
    ],
}


def write_json(path: Path, document: dict) -> str:
    """Write a JSON document and return its path."""
    path.write_text(json.dumps(document), encoding="utf8")
    return str(path)


def write_csv(path: Path, lines: list[str]) -> str:
    """Write CSV lines and return the path."""
    path.write_text("\n".join(lines) + "\n", encoding="utf8")
    return str(path)


def run(*argv: str):
    """Run a command that must succeed."""
    report, text, status = execute(list(argv))
    assert status == EXIT_OK
    return report, text


def test_score_s_root(tmp_path: Path) -> None:
    """Test an S-root network scores directly with the unsampled rows as m_F."""
    network = write_json(tmp_path / "net.json", S_ROOT)
    data = write_csv(tmp_path / "data.csv", ["X,S", "T,T", "F,T", "?,F"])
    report, text = run("score", "--network", network, "--data", data)
    assert text is None
    assert report.results["method"] == "direct"
    assert report.results["m_T"] == 2
    assert report.results["m_F_prior"] == {1: 1.0}
    assert report.methods == ["direct"]
    assert report.diagnostics == ["priors.ess: not given, using 1.0"]
    assert report.results["log_marginal_likelihood"] < 0

    report, _ = run("score", "--network", network, "--data", data, "--mf", "3")
    assert report.results["m_F_prior"] == {3: 1.0}


def test_score_fatigue_clinic() -> None:
    """Test the bundled clinic data with its selection prior."""
    report, _ = run(
        "score", "--network", "builtin:fatigue_clinic", "--data", str(CONFIG / "clinic_cases.csv")
    )
    assert report.results["m_T"] == 3
    assert report.results["m_F_prior"] == {4: 1.0}
    assert report.results["term_counts"]["full"] == 2**20


def test_exhaustive_search(tmp_path: Path) -> None:
    """Test two domain variables with S left alone give three structures."""
    network = write_json(tmp_path / "net.json", PAIR)
    data = write_csv(tmp_path / "data.csv", ["X,Y,S", "T,T,T", "F,F,T", "T,F,T", "?,?,F"])
    constraints = write_json(tmp_path / "constraints.json", {"fixed_s_parents": []})
    for command in (["posterior"], ["search", "--mode", "exhaustive"]):
        report, _ = run(
            *command, "--network", network, "--data", data, "--constraints", constraints
        )
        assert report.results["structure_count"] == 3
        assert report.results["posterior_total"] == pytest.approx(1.0, abs=1e-12)
        assert [s["rank"] for s in report.results["structures"]] == [1, 2, 3]
        assert "constraints" in report.inputs


def test_greedy_search(tmp_path: Path) -> None:
    """Test greedy search reports its seed and trace."""
    network = write_json(tmp_path / "net.json", PAIR)
    data = write_csv(tmp_path / "data.csv", ["X,Y,S", "T,T,T", "F,F,T", "T,T,T"])
    report, _ = run(
        "search", "--network", network, "--data", data, "--seed", "3", "--restarts", "2"
    )
    assert report.seed == 3
    assert report.results["trace"][0]["operation"] == "start"
    again, _ = run(
        "search", "--network", network, "--data", data, "--seed", "3", "--restarts", "2"
    )
    assert again.to_json() == report.to_json()


def test_simulate_is_reproducible() -> None:
    """Test equal seeds give byte-identical population files."""
    argv = ["simulate", "--network", "builtin:case_control", "--n", "300", "--seed", "7"]
    _, first = run(*argv)
    _, second = run(*argv)
    assert first == second
    assert first.startswith("# seed: 7\n")
    assert first.splitlines()[3] == "E,D,S"
    _, other = run(*argv[:-1], "8")
    assert other != first


def test_simulate_and_project(tmp_path: Path) -> None:
    """Test a case-control population projects to its quotas."""
    population = tmp_path / "population.csv"
    report, text = run(
        "simulate",
        "--network",
        "builtin:case_control",
        "--n",
        "1000",
        "--seed",
        "7",
        "--selection",
        str(CONFIG / "case_control_selection.json"),
        "--out",
        str(population),
    )
    assert text is None
    assert report.results["selection_counts"] == {"case": 50, "control": 50, "us": 900}
    assert report.results["mechanism"] == "quota(case=50,control=50)"
    assert population.read_text(encoding="utf8").startswith("# seed: 7\n")

    report, text = run(
        "project", "--network", "builtin:case_control", "--population", str(population)
    )
    assert report.results["m_T"] == 100
    assert report.results["m_F"] == 900
    assert text.startswith("# m_T: 100\n# m_F: 900\nE,D,S\n")
    assert text.count("?,?,us") == 900

    data = write_csv(tmp_path / "data.csv", text.splitlines())
    spec = load_network_spec("builtin:case_control")
    dataset = load_dataset(data, spec.structure)
    assert (len(dataset), dataset.unsampled) == (100, 900)


def test_project_archives_ground_truth(tmp_path: Path) -> None:
    """Test the archive beside a projected file rebuilds the simulated population."""
    population = tmp_path / "population.csv"
    run(
        "simulate",
        "--network",
        "builtin:mixed_experiment",
        "--n",
        "300",
        "--seed",
        "2",
        "--manipulation",
        str(CONFIG / "mixed_design.json"),
        "--selection",
        str(CONFIG / "mixed_selection.json"),
        "--out",
        str(population),
    )
    data = tmp_path / "data.csv"
    report, text = run(
        "project",
        "--network",
        "builtin:mixed_experiment",
        "--population",
        str(population),
        "--out",
        str(data),
    )
    assert text is None
    archive = tmp_path / "data.truth.csv"
    assert report.results["ground_truth_file"] == str(archive)
    assert archive.read_text(encoding="utf8").startswith("# archive: ground truth\n")

    network = load_network_spec("builtin:mixed_experiment").require_network()
    truth = load_ground_truth(archive, network)
    assert truth.latent == ("X1", "X3")
    rebuilt = truth.reconstruct(load_dataset(data, network.structure))
    np.testing.assert_array_equal(rebuilt.values, load_population(population, network).values)
    rows = frame_text(rebuilt.records(), network.structure.names, {})
    assert rows.splitlines() == population.read_text(encoding="utf8").splitlines()[3:]


def test_simulate_with_manipulation() -> None:
    """Test the mixed design assigns exactly the enrolled count."""
    report, text = run(
        "simulate",
        "--network",
        "builtin:mixed_experiment",
        "--n",
        "300",
        "--seed",
        "2",
        "--manipulation",
        str(CONFIG / "mixed_design.json"),
        "--selection",
        str(CONFIG / "mixed_selection.json"),
    )
    rows = [line.split(",") for line in text.splitlines()[4:]]
    assert len(rows) == 300
    assert sum(row[0] != "ne" for row in rows) == 20
    assert report.results["mechanism"] == "composite(mechanistic;quota(ex=20))"
    assert report.results["selection_counts"]["ex"] >= 20


def test_reverse() -> None:
    """Test the S-root transformation report."""
    report, _ = run("reverse", "--network", "builtin:selection_recovery")
    assert report.results["reversed"] == ["X->S"]
    assert report.results["tree_valid"] is True
    assert report.results["parameter_count"] == {"original": 8, "reversed": 8}
    assert report.results["result"]["encoding"] == "S->X,X->Y,Z->Y"


def test_bic(tmp_path: Path) -> None:
    """Test the heuristic score report and its saved copy."""
    out = tmp_path / "report.json"
    report, _ = run(
        "bic",
        "--network",
        "builtin:fatigue_clinic",
        "--data",
        str(CONFIG / "clinic_cases.csv"),
        "--out",
        str(out),
    )
    assert report.results["sample_size"] == 7
    assert report.results["param_count"] == 13
    assert report.methods == ["bic"]
    saved = out.read_text(encoding="utf8")
    assert saved == report.to_json()
    assert saved.endswith("\n")
    assert list(json.loads(saved)) == sorted(json.loads(saved))


def test_dsep() -> None:
    """Test selection on a common effect connects its causes."""
    report, _ = run("dsep", "--network", "builtin:b_prime", "--x", "X2", "--y", "X3")
    assert report.results["d_separated"] is True
    report, _ = run(
        "dsep", "--network", "builtin:b_prime", "--x", "X2", "--y", "X3", "--given", "S"
    )
    assert report.results["d_separated"] is False
    assert report.results["given"] == ["S"]


def test_timing_is_opt_in() -> None:
    """Test reports carry wall-clock time only on request."""
    report, _ = run("reverse", "--network", "builtin:b_prime")
    assert "wall_clock_seconds" not in report.as_dict()
    report, _ = run("reverse", "--network", "builtin:b_prime", "--timing")
    assert "wall_clock_seconds" in report.as_dict()


@pytest.mark.parametrize(
    ("argv", "status", "message"),
    [
        (["reverse", "--network", "builtin:nowhere"], EXIT_USAGE, "spec error"),
        (
            ["score", "--network", "builtin:b_prime", "--data", str(CONFIG / "clinic_cases.csv")],
            EXIT_DATA,
            "data error",
        ),
        (
            [
                "score",
                "--network",
                "builtin:fatigue_clinic",
                "--data",
                str(CONFIG / "clinic_cases.csv"),
                "--strategy",
                "full",
                "--budget",
                "1",
            ],
            EXIT_BUDGET,
            "budget error: Number of terms 1048576 exceeds budget 1",
        ),
        (
            ["search", "--network", "builtin:b_prime", "--data", str(CONFIG / "clinic_cases.csv")],
            EXIT_USAGE,
            "usage error: --seed is required",
        ),
        (
            ["dsep", "--network", "builtin:b_prime", "--x", "X2", "--y", "X2"],
            5,
            "must differ",
        ),
    ],
)
def test_errors(argv: list[str], status: int, message: str, capsys) -> None:
    """Test failures print one categorized line and exit with their status."""
    report, text, code = execute(argv)
    assert (report, text, code) == (None, None, status)
    err = capsys.readouterr().err
    assert err.startswith("selbayes: ")
    assert message in err


def test_bad_arguments() -> None:
    """Test argument errors exit with the usage status."""
    assert execute(["score"])[2] == EXIT_USAGE
    assert execute(["simulate", "--network", "builtin:b_prime", "--n", "-1", "--seed", "1"])[
        2
    ] == EXIT_USAGE


def test_unknown_state(tmp_path: Path) -> None:
    """Test an unknown label names its row and column."""
    spec = load_network_spec("builtin:b_prime")
    data = write_csv(tmp_path / "data.csv", ["X2,X3,X4,S", "T,maybe,T,T"])
    with pytest.raises(ValueError, match="row 1, column X3: unknown state 'maybe'"):
        load_dataset(data, spec.structure)


def test_hash_inside_a_field_is_data(tmp_path: Path) -> None:
    """Test only whole lines starting with '#' are comments."""
    net = structure([binary("Y"), VariableSpec(name="X", states=("lo", "hi"))])
    lines = ["# made by hand", "Y,X", "T,lo", "  # aside", "T,lo#2"]
    data = write_csv(tmp_path / "data.csv", lines)
    with pytest.raises(DataError, match="row 2, column X: unknown state 'lo#2'"):
        load_dataset(data, net)

    data = write_csv(tmp_path / "data.csv", ["Y,X", "# aside", "T,lo", "F,hi"])
    dataset = load_dataset(data, net)
    assert dataset.records() == [{"Y": "T", "X": "lo"}, {"Y": "F", "X": "hi"}]


def test_fields_are_not_unquoted(tmp_path: Path) -> None:
    """Test quotes are kept as part of a field."""
    spec = load_network_spec("builtin:b_prime")
    data = write_csv(tmp_path / "data.csv", ["X2,X3,X4,S", '"T",T,T,T'])
    with pytest.raises(DataError, match="""unknown state '"T"'"""):
        load_dataset(data, spec.structure)


def test_network_errors_are_collected(tmp_path: Path) -> None:
    """Test every undeclared name is reported at once."""
    document = {
        "variables": [
            {"name": "X", "states": ["T", "F"]},
            {"name": "Q", "states": ["T", "F"], "role": "manipulation", "target": "X"},
        ],
        "edges": [["X", "Z"], ["W", "X"]],
    }
    with pytest.raises(SpecError) as excinfo:
        load_network_spec(write_json(tmp_path / "net.json", document))
    errors = excinfo.value.errors
    assert len(errors) == 3
    assert errors[0].startswith("variables.1: ")
    assert "'ne'" in errors[0]
    assert errors[1:] == ["edges.0: undeclared variable Z", "edges.1: undeclared variable W"]


def test_schema_errors(tmp_path: Path) -> None:
    """Test schema violations name their location."""
    with pytest.raises(SpecError, match="variables"):
        load_network_spec(write_json(tmp_path / "net.json", {"edges": []}))
    (tmp_path / "broken.json").write_text("{", encoding="utf8")
    with pytest.raises(SpecError, match="line 1"):
        load_network_spec(tmp_path / "broken.json")


def test_minimal_network(tmp_path: Path) -> None:
    """Test a single variable needs nothing else."""
    document = {"variables": [{"name": "X", "states": ["T", "F"]}]}
    spec = load_network_spec(write_json(tmp_path / "net.json", document))
    assert spec.structure.names == ("X",)
    assert spec.prior.likelihood_equivalent
    with pytest.raises(SpecError, match="probability tables are required"):
        spec.require_network()


def test_selection_prior_from_document(fatigue_clinic) -> None:
    """Test the clinic's S-family prior at m_F=4."""
    alpha = fatigue_clinic.prior.family_alpha(fatigue_clinic.structure, "S", 4)
    np.testing.assert_allclose(alpha, [[0.9, 0.1], [0.01, 0.99]])


def test_load_dataset(tmp_path: Path, fatigue_clinic) -> None:
    """Test unsampled rows are counted and header-only files are empty."""
    data = load_dataset(CONFIG / "clinic_cases.csv", fatigue_clinic.structure)
    assert (len(data), data.unsampled) == (3, 4)

    empty = write_csv(tmp_path / "empty.csv", ["X1,X2,X3,X4,X5,S"])
    data = load_dataset(empty, fatigue_clinic.structure)
    assert (len(data), data.unsampled) == (0, 0)

    mixed = load_network_spec("builtin:mixed_experiment")
    data = load_dataset(CONFIG / "mixed_cases.csv", mixed.structure)
    assert (len(data), data.unsampled) == (7, 2)

    three = load_network_spec("builtin:three_subpopulations")
    data = load_dataset(CONFIG / "three_clinics.csv", three.structure)
    assert (len(data), data.unsampled) == (5, 2)


@pytest.fixture
def package_logger():
    """Return the package logger, restoring its configuration afterwards."""
    logger = logging.getLogger(DOMAIN)
    handlers, propagate, level = logger.handlers[:], logger.propagate, logger.level
    yield logger
    logger.handlers[:] = handlers
    logger.propagate = propagate
    logger.setLevel(level)


@pytest.mark.parametrize(
    ("value", "level"),
    [
        ("debug", logging.DEBUG),
        (" Info ", logging.INFO),
        ("error", logging.ERROR),
        ("notset", logging.NOTSET),
    ],
)
def test_log_level_from_environment(
    value: str, level: int, package_logger, monkeypatch: pytest.MonkeyPatch, capsys
) -> None:
    """Test every known level name is applied as given."""
    monkeypatch.setenv(LOG_ENV, value)
    setup_logging()
    assert package_logger.level == level
    assert capsys.readouterr().err == ""


def test_log_level_default(package_logger, monkeypatch: pytest.MonkeyPatch) -> None:
    """Test an unset variable means warnings only."""
    monkeypatch.delenv(LOG_ENV, raising=False)
    setup_logging()
    assert package_logger.level == logging.WARNING


def test_unknown_log_level_warns(package_logger, monkeypatch: pytest.MonkeyPatch, capsys) -> None:
    """Test an unknown level name falls back to warning and says so."""
    monkeypatch.setenv(LOG_ENV, "chatty")
    setup_logging()
    assert package_logger.level == logging.WARNING
    assert "Unknown SELBAYES_LOG level CHATTY, using warning" in capsys.readouterr().err
