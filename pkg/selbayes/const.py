"""Constants for the selbayes command line."""

from __future__ import annotations

from typing import Final

DOMAIN: Final = "selbayes"
LOG_ENV: Final = "SELBAYES_LOG"
DEFAULT_LOG_LEVEL: Final = "warning"

BUILTIN_PREFIX: Final = "builtin:"
TRUTH_SUFFIX: Final = ".truth.csv"

EXIT_OK: Final = 0
EXIT_USAGE: Final = 2
EXIT_DATA: Final = 3
EXIT_BUDGET: Final = 4
EXIT_ERROR: Final = 5

LOG_FORMAT: Final = "%(log_color)s%(levelname)-8s%(reset)s %(name)s: %(message)s"
