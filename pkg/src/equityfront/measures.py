"""Inequality measures over workload vectors and the lexicographic min-max order.

Every measure is evaluated on the non-increasing sort of its input, which
makes results bit-identical under permutation of the outcomes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

LexKey = tuple[float, ...]


class Measure(str, Enum):
    MINMAX = "minmax"
    LEX = "lex"
    RANGE = "range"
    MAD = "mad"
    STDDEV = "stddev"
    GINI = "gini"
    COEFF_VAR = "cv"
    MEAN_SCALED_GINI = "msgini"

    @property
    def props(self) -> "MeasureProps":
        return PROPERTIES[self]

    @property
    def is_monotonic(self) -> bool:
        return self.props.monotonicity != "none"

    @property
    def is_scalar(self) -> bool:
        return self is not Measure.LEX

    @classmethod
    def parse(cls, name: str) -> "Measure":
        key = name.strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "minmax": cls.MINMAX,
            "lex": cls.LEX,
            "lexminmax": cls.LEX,
            "range": cls.RANGE,
            "mad": cls.MAD,
            "stddev": cls.STDDEV,
            "std": cls.STDDEV,
            "gini": cls.GINI,
            "cv": cls.COEFF_VAR,
            "coeffvar": cls.COEFF_VAR,
            "msgini": cls.MEAN_SCALED_GINI,
            "meanscaledgini": cls.MEAN_SCALED_GINI,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown measure {name!r}") from None


@dataclass(frozen=True)
class MeasureProps:
    """Axiomatic classification of a measure.

    ``monotonicity`` is one of ``none``/``weak``/``strong`` and ``pd`` (the
    Pigou-Dalton grade) one of ``weak``/``weak_plus``/``strong``.
    """

    label: str
    inequality_relevant: bool
    scale_invariant: bool
    translation_invariant: bool
    population_independent: bool
    anonymous: bool
    monotonicity: str
    pd: str
    transitive: bool = True


PROPERTIES: dict[Measure, MeasureProps] = {
    Measure.MINMAX: MeasureProps("min-max", False, False, False, True, True, "weak", "weak"),
    Measure.LEX: MeasureProps("lexicographic min-max", False, False, False, True, True, "strong", "strong"),
    Measure.RANGE: MeasureProps("range", True, False, True, True, True, "none", "weak"),
    Measure.MAD: MeasureProps("mean absolute deviation", True, False, True, True, True, "none", "weak_plus"),
    Measure.STDDEV: MeasureProps("standard deviation", True, False, True, True, True, "none", "strong"),
    Measure.GINI: MeasureProps("Gini coefficient", True, True, False, True, True, "none", "strong"),
    Measure.COEFF_VAR: MeasureProps("coefficient of variation", True, True, False, True, True, "none", "strong"),
    Measure.MEAN_SCALED_GINI: MeasureProps("mean-scaled Gini", True, False, True, True, True, "none", "strong"),
}

# The six measures compared throughout the toolkit, in order of sophistication.
CORE_MEASURES: tuple[Measure, ...] = (
    Measure.MINMAX,
    Measure.LEX,
    Measure.RANGE,
    Measure.MAD,
    Measure.STDDEV,
    Measure.GINI,
)
MONOTONIC_MEASURES = tuple(m for m in CORE_MEASURES if m.is_monotonic)
NON_MONOTONIC_MEASURES = tuple(m for m in CORE_MEASURES if not m.is_monotonic)


def as_workload(x: Sequence[float]) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError("a workload vector is one-dimensional")
    if arr.size < 2:
        raise ValueError("a workload vector needs at least 2 outcomes")
    if not np.all(np.isfinite(arr)):
        raise ValueError("workloads must be finite")
    if np.any(arr < 0):
        raise ValueError("workloads must be nonnegative")
    return arr


def sort_desc(rows: np.ndarray) -> np.ndarray:
    """Sort each row of a 2-D array in non-increasing order."""
    return -np.sort(-np.asarray(rows, dtype=float), axis=1)


def _row_sums(w: np.ndarray) -> np.ndarray:
    # explicit left-to-right accumulation keeps single-row and batched results identical
    total = w[:, 0].copy()
    for k in range(1, w.shape[1]):
        total += w[:, k]
    return total


def _pair_gap_sum(w: np.ndarray) -> np.ndarray:
    """Sum over unordered pairs of |x_i - x_j| for rows sorted non-increasingly."""
    n = w.shape[1]
    acc = np.zeros(w.shape[0])
    for k in range(n):
        acc += (n - 1 - 2 * k) * w[:, k]
    return acc


def evaluate_sorted(measure: Measure, w: np.ndarray) -> np.ndarray:
    """Vectorized evaluation on an (N, n) array whose rows are sorted non-increasingly."""
    if measure is Measure.LEX:
        raise ValueError("the lexicographic measure has no scalar value; use lex_key")
    n = w.shape[1]
    if measure is Measure.MINMAX:
        return w[:, 0].copy()
    if measure is Measure.RANGE:
        return w[:, 0] - w[:, -1]
    total = _row_sums(w)
    mean = total / n
    if measure is Measure.MAD:
        dev = np.zeros(w.shape[0])
        for k in range(n):
            dev += np.abs(w[:, k] - mean)
        return dev / n
    if measure in (Measure.STDDEV, Measure.COEFF_VAR):
        sq = np.zeros(w.shape[0])
        for k in range(n):
            sq += (w[:, k] - mean) ** 2
        std = np.sqrt(sq / n)
        if measure is Measure.STDDEV:
            return std
        return np.divide(std, mean, out=np.zeros_like(std), where=mean > 0)
    gaps = _pair_gap_sum(w)
    if measure is Measure.GINI:
        # (1 / (2 n^2 mean)) * sum_i sum_j |x_i - x_j|, the double sum being 2 * gaps
        return np.divide(gaps, n * total, out=np.zeros_like(gaps), where=total > 0)
    if measure is Measure.MEAN_SCALED_GINI:
        return gaps / (n * n)
    raise ValueError(f"unhandled measure {measure}")


def evaluate(measure: Measure, x: Sequence[float]) -> float:
    """Inequality value of a single workload vector.

    Gini and the coefficient of variation return 0 for an all-zero vector.
    """
    arr = as_workload(x)
    return float(evaluate_sorted(Measure(measure), sort_desc(arr[None, :]))[0])


def lex_key(x: Sequence[float]) -> LexKey:
    arr = as_workload(x)
    return tuple(float(v) for v in sorted(arr.tolist(), reverse=True))


def lex_compare(a: Sequence[float], b: Sequence[float]) -> int:
    """Compare two lex keys: -1 if ``a`` is preferable (smaller), 0 if equal, 1 otherwise."""
    if len(a) != len(b):
        raise ValueError(f"cannot compare lex keys of lengths {len(a)} and {len(b)}")
    for ai, bi in zip(a, b):
        if ai < bi:
            return -1
        if ai > bi:
            return 1
    return 0


def pd_transfer_unchecked(x: Sequence[float], i: int, j: int, delta: float) -> np.ndarray:
    """Move ``delta`` from outcome ``j`` to outcome ``i`` without any precondition."""
    out = np.array(x, dtype=float)
    out[i] += delta
    out[j] -= delta
    return out


def pd_transfer(x: Sequence[float], i: int, j: int, delta: float) -> np.ndarray:
    """Progressive Pigou-Dalton transfer of ``delta`` from ``x[j]`` to ``x[i]``.

    Requires ``i != j`` and ``0 <= delta < x[j] - x[i]``.
    """
    arr = as_workload(x)
    if i == j:
        raise ValueError("a transfer needs two distinct outcomes")
    gap = arr[j] - arr[i]
    if not (0 <= delta < gap):
        raise ValueError(f"progressive transfer needs 0 <= delta < {gap!r}, got {delta!r}")
    return pd_transfer_unchecked(arr, i, j, delta)
