from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binom

from .errors import DomainError
from .training import RunMatrix

DEFAULT_ALPHA = 0.001


def _check_counts(n: int, k: Optional[int] = None) -> None:
    if int(n) != n or n < 0:
        raise DomainError(f"n must be a non-negative integer, got {n}")
    if k is not None and (int(k) != k or k < 0 or k > n):
        raise DomainError(f"k must be an integer in [0, {n}], got {k}")


def _check_probability(p: float, name: str = "p") -> None:
    if not (0.0 < p < 1.0):
        raise DomainError(f"{name} must lie in (0, 1), got {p}")


def binom_upper_tail(n: int, k: int, p: float) -> float:
    """P(X >= k) for X ~ Binomial(n, p), summed in log space."""
    _check_counts(n, k)
    _check_probability(p)
    if k == 0:
        return 1.0
    log_terms = binom.logpmf(np.arange(int(k), int(n) + 1), int(n), p)
    return float(min(1.0, math.exp(logsumexp(log_terms))))


def critical_count(n: int, p: float, alpha: float) -> int:
    """Smallest k with P(X >= k) <= alpha, or n + 1 when no count is significant."""
    _check_counts(n)
    _check_probability(p)
    _check_probability(alpha, "alpha")
    # the tail is nonincreasing in k, so binary search the first passing count
    low, high = 0, int(n)
    answer = int(n) + 1
    while low <= high:
        k = (low + high) // 2
        if binom_upper_tail(n, k, p) <= alpha:
            answer = k
            high = k - 1
        else:
            low = k + 1
    return answer


@dataclass(frozen=True)
class SolvableSet:
    """Predictions a model gets right significantly more often than 1/c chance."""

    dataset_name: str
    model_name: str
    prediction_ids: Tuple[int, ...]
    universe: Tuple[int, ...]
    alpha: float
    n_runs: int
    num_classes: int
    critical_count: int
    mean_accuracy: Optional[float] = None
    propagation: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "prediction_ids", tuple(sorted(int(i) for i in self.prediction_ids)))
        object.__setattr__(self, "universe", tuple(int(i) for i in self.universe))
        _check_probability(self.alpha, "alpha")
        missing = set(self.prediction_ids) - set(self.universe)
        if missing:
            raise DomainError(f"solvable ids outside the universe: {sorted(missing)[:5]}")

    @property
    def universe_size(self) -> int:
        return len(self.universe)

    @property
    def members(self) -> frozenset:
        return frozenset(self.prediction_ids)

    def __len__(self) -> int:
        return len(self.prediction_ids)

    @property
    def ratio(self) -> Optional[float]:
        if not self.universe:
            return None
        return len(self.prediction_ids) / len(self.universe)


def p_values(runs: RunMatrix) -> np.ndarray:
    """Upper-tail p-value of every prediction's correct count under Bernoulli(1/c)."""
    if runs.num_classes < 2:
        raise DomainError("solvable sets need num_classes >= 2")
    p = 1.0 / runs.num_classes
    cache: Dict[int, float] = {}
    counts = runs.correct_counts()
    out = np.empty(len(counts))
    for i, k in enumerate(counts):
        k = int(k)
        if k not in cache:
            cache[k] = binom_upper_tail(runs.n_runs, k, p)
        out[i] = cache[k]
    return out


def solvable_set(runs: RunMatrix, alpha: float = DEFAULT_ALPHA) -> SolvableSet:
    """One-sided binomial test per prediction; no multiple-testing correction.

    Aborted runs are already all-incorrect rows, so n stays fixed.
    """
    if runs.num_classes < 2:
        raise DomainError(f"solvable sets need num_classes >= 2, got {runs.num_classes}")
    _check_probability(alpha, "alpha")
    k_star = critical_count(runs.n_runs, 1.0 / runs.num_classes, alpha)
    counts = runs.correct_counts()
    ids = np.asarray(runs.prediction_ids, dtype=np.int64)
    members = ids[counts >= k_star]
    acc = runs.test_accuracy()
    return SolvableSet(
        dataset_name=runs.dataset_name,
        model_name=runs.model_name,
        prediction_ids=tuple(int(i) for i in members),
        universe=runs.prediction_ids,
        alpha=alpha,
        n_runs=runs.n_runs,
        num_classes=runs.num_classes,
        critical_count=k_star,
        mean_accuracy=float(acc.mean()) if runs.n_predictions else None,
        propagation=runs.propagation,
    )
