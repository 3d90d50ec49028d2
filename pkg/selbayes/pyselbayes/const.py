"""Constants."""

from __future__ import annotations

import json
import os
from typing import Any, Final

DEFAULT_BUDGET: Final = 2**20
ENUMERATION_CAP: Final = 2**22
TERM_COUNT_LIMIT: Final = 2**63
CHUNK_SIZE: Final = 2**14

DEFAULT_ESS: Final = 1.0
DEFAULT_RESTARTS: Final = 10
DEFAULT_MAX_PARENTS: Final = 3
EXHAUSTIVE_MAX_DOMAIN: Final = 4

NOT_EXPERIMENTAL: Final = "ne"
MISSING: Final = -1
MISSING_LABEL: Final = "?"
# Characters a name or state label cannot hold in a data file
RESERVED_CHARACTERS: Final = frozenset(",#\"'")

# Tried in order when a selection variable does not name its unsampled state
UNSAMPLED_LABELS: Final = ("F", "us", "unsampled")

ROW_SUM_TOLERANCE: Final = 1e-9
CPT_TOLERANCE: Final = 1e-12

SIGNIFICANT_DIGITS: Final = 12

__NETWORKS_FILE = os.path.join(os.path.dirname(__file__), "networks.json")
try:
    with open(__NETWORKS_FILE, "r", encoding="utf8") as file:
        NETWORKS: Final[dict[str, dict[str, Any]]] = json.load(file)
except Exception:  # ignore: broad-except
    NETWORKS = {}
