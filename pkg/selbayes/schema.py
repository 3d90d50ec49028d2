"""Schemas for the JSON documents the command line reads."""

from __future__ import annotations

import voluptuous as vol

from .pyselbayes.graph import Role
from .pyselbayes.priors import PriorMode
from .pyselbayes.search import StructurePriorMode
from .pyselbayes.simulate import MechanismKind

NAME = vol.All(str, vol.Length(min=1))
EDGE = vol.ExactSequence([NAME, NAME])
TABLE = vol.All([[vol.Coerce(float)]], vol.Length(min=1))
PROBABILITY = vol.All(vol.Coerce(float), vol.Range(min=0, max=1))
POSITIVE = vol.All(vol.Coerce(float), vol.Range(min=0, min_included=False))
COUNT = vol.All(int, vol.Range(min=0))
M_F_TABLE = vol.Schema({vol.Coerce(int): PROBABILITY})

VARIABLE_SCHEMA = vol.Schema(
    {
        vol.Required("name"): NAME,
        vol.Required("states"): vol.All([NAME], vol.Length(min=2)),
        vol.Optional("role", default=Role.DOMAIN.value): vol.In([r.value for r in Role]),
        vol.Optional("latent", default=False): bool,
        vol.Optional("target"): NAME,
        vol.Optional("unsampled"): NAME,
    }
)

PRIORS_SCHEMA = vol.Schema(
    {
        vol.Optional("mode", default=PriorMode.BDE.value): vol.In([m.value for m in PriorMode]),
        vol.Optional("ess"): POSITIVE,
        vol.Optional("alpha"): POSITIVE,
        vol.Optional("tables"): {NAME: TABLE},
        vol.Optional("prior_network"): {
            vol.Required("edges"): [EDGE],
            vol.Required("cpts"): {NAME: TABLE},
        },
    }
)

SELECTION_PRIOR_SCHEMA = vol.Schema(
    {
        vol.Required("parents"): [NAME],
        vol.Required("per_mF"): vol.All(
            {
                vol.Coerce(int): {
                    vol.Required("means"): TABLE,
                    vol.Optional("ess", default=1.0): vol.Any(POSITIVE, [POSITIVE]),
                }
            },
            vol.Length(min=1),
        ),
    }
)

POPULATION_SCHEMA = vol.Schema(
    {
        vol.Exclusive("m_F", "population"): COUNT,
        vol.Exclusive("m_F_prior", "population"): vol.All(M_F_TABLE, vol.Length(min=1)),
        vol.Optional("per_structure"): {str: M_F_TABLE},
    }
)

NETWORK_SCHEMA = vol.Schema(
    {
        vol.Optional("description"): str,
        vol.Required("variables"): vol.All([VARIABLE_SCHEMA], vol.Length(min=1)),
        vol.Optional("edges", default=list): [EDGE],
        vol.Optional("cpts"): {NAME: TABLE},
        vol.Optional("priors", default=dict): PRIORS_SCHEMA,
        vol.Optional("selection_prior"): SELECTION_PRIOR_SCHEMA,
        vol.Optional("population"): POPULATION_SCHEMA,
    }
)

CONSTRAINTS_SCHEMA = vol.Schema(
    {
        vol.Optional("required", default=list): [EDGE],
        vol.Optional("forbidden", default=list): [EDGE],
        vol.Optional("fixed_s_parents", default=None): vol.Any(None, [NAME]),
        vol.Optional("max_parents", default=3): vol.Any(None, COUNT),
        vol.Optional("manipulation_rooted", default=True): bool,
        vol.Optional("structure_prior", default=dict): {
            vol.Optional("mode", default=StructurePriorMode.UNIFORM.value): vol.In(
                [m.value for m in StructurePriorMode]
            ),
            vol.Optional("edge_probabilities", default=list): [
                vol.ExactSequence([NAME, NAME, PROBABILITY])
            ],
            vol.Optional("default", default=0.5): PROBABILITY,
        },
    }
)

CONDITION_SCHEMA = vol.Schema(
    {vol.Required("variable"): NAME, vol.Required("states"): vol.All([NAME], vol.Length(min=1))}
)

MECHANISM_SCHEMA = vol.Schema(
    {
        vol.Required("kind"): vol.In([k.value for k in MechanismKind]),
        vol.Optional("quotas", default=list): [
            {
                vol.Required("state"): NAME,
                vol.Required("count"): COUNT,
                vol.Optional("conditions", default=list): [CONDITION_SCHEMA],
            }
        ],
        vol.Optional("parts", default=list): [vol.Self],
        vol.Optional("combined", default=list): [
            {
                vol.Required("states"): vol.All([NAME], vol.Length(min=2)),
                vol.Required("state"): NAME,
            }
        ],
    }
)

DESIGN_SCHEMA = vol.Schema(
    {
        vol.Required("plans"): [
            {
                vol.Required("variable"): NAME,
                vol.Required("assignment"): vol.All({NAME: PROBABILITY}, vol.Length(min=1)),
                vol.Optional("fraction", default=0.0): PROBABILITY,
                vol.Optional("count"): COUNT,
                vol.Optional("compliance", default=1.0): PROBABILITY,
            }
        ]
    }
)
