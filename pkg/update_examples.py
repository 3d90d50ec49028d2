"""Script to regenerate the simulated example data in config/."""

from __future__ import annotations

from selbayes.helpers import (
    blank_records,
    frame_text,
    load_network_spec,
    simulate_population,
    write_text,
)
from selbayes.pyselbayes import Population, project

EXAMPLES = {
    "case_control": {
        "network": "builtin:case_control",
        "n": 1000,
        "seed": 11,
        "selection": "config/case_control_selection.json",
    },
    "mixed_experiment": {
        "network": "builtin:mixed_experiment",
        "n": 200,
        "seed": 4,
        "manipulation": "config/mixed_design.json",
        "selection": "config/mixed_selection.json",
    },
    "selection_recovery": {"network": "builtin:selection_recovery", "n": 4000, "seed": 8},
}


def simulate(example: dict) -> Population:
    """Draw one example population."""
    return simulate_population(
        load_network_spec(example["network"]).require_network(),
        example["n"],
        example["seed"],
        example.get("manipulation"),
        example.get("selection"),
    )


def update_examples() -> None:
    """Update example data files."""
    for name, example in EXAMPLES.items():
        try:
            population = simulate(example)
        except Exception as ex:
            print(type(ex).__name__, ex)
            continue

        dataset, population_spec, _ = project(population)
        m_F = population_spec.point_mass
        print(f"Updating {name}: {len(dataset)} sampled, {m_F} unsampled")
        write_text(
            f"config/{name}_population.csv",
            frame_text(
                population.records(),
                population.structure.names,
                {"seed": example["seed"], "network": population.network.fingerprint()},
            ),
        )
        write_text(
            f"config/{name}.csv",
            frame_text(
                dataset.records() + blank_records(dataset, population.structure, m_F),
                dataset.names,
                {"m_T": len(dataset), "m_F": m_F},
            ),
        )


if __name__ == "__main__":
    update_examples()
