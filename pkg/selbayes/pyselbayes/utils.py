"""Selection-aware scoring utils."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
import hashlib
import math

import numpy as np
from scipy.special import logsumexp

from .const import SIGNIFICANT_DIGITS


def log_sum_exp(values: Iterable[float] | np.ndarray) -> float:
    """Return log(sum(exp(values))) with a max shift; -inf for no mass."""
    if isinstance(values, np.ndarray):
        array = values.astype(float, copy=False).ravel()
    else:
        array = np.fromiter(values, dtype=float)
    if array.size == 0 or np.all(array == -np.inf):
        return -math.inf
    return float(logsumexp(array))


def config_index(values: np.ndarray, radices: Sequence[int]) -> np.ndarray:
    """Map rows of state indices to mixed-radix configuration indices.

    The first column is the most significant digit; no columns means
    configuration 0 for every row.
    """
    values = np.asarray(values, dtype=np.int64)
    if not len(radices):
        return np.zeros(values.shape[0], dtype=np.int64)
    return np.ravel_multi_index(tuple(values.T), tuple(radices)).astype(np.int64)


def config_states(index: int, radices: Sequence[int]) -> tuple[int, ...]:
    """Inverse of config_index for a single configuration."""
    if not len(radices):
        return ()
    return tuple(int(i) for i in np.unravel_index(index, tuple(radices)))


def format_number(value: float) -> float | str:
    """Round to the report precision; non-finite values become text."""
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return float(f"{value:.{SIGNIFICANT_DIGITS}g}")


def stable_hash(*parts: str | bytes) -> str:
    """Return a sha256 hex digest over the given parts."""
    digest = hashlib.sha256()
    for part in parts:
        digest.update(part.encode("utf8") if isinstance(part, str) else part)
        digest.update(b"\0")
    return digest.hexdigest()
