"""Error and rank-agreement metrics plus the Wilcoxon signed-rank test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyInput, LengthMismatch, TooFewPairs

EXACT_WILCOXON_MAX_N = 20


def mae(errors: Sequence[float]) -> float:
    if len(errors) == 0:
        raise EmptyInput("mae of an empty list")
    return math.fsum(abs(e) for e in errors) / len(errors)


def _count_inversions(seq: list) -> int:
    """Number of pairs i < j with seq[i] > seq[j] (merge sort, O(n log n))."""
    if len(seq) < 2:
        return 0
    mid = len(seq) // 2
    left, right = seq[:mid], seq[mid:]
    count = _count_inversions(left) + _count_inversions(right)
    i = j = k = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            seq[k] = left[i]
            i += 1
        else:
            seq[k] = right[j]
            count += len(left) - i
            j += 1
        k += 1
    seq[k:] = left[i:] + right[j:]
    return count


def rank_positions(pairs) -> list[int]:
    """Predicted-list rank of each film, listed in actual-vote order.

    Both lists sort by vote descending with ties broken by ascending movie
    id. Ranks are 1-based.
    """
    by_pred = sorted(pairs, key=lambda t: (-t[2], t[0]))
    pred_rank = {movie: i + 1 for i, (movie, _, _) in enumerate(by_pred)}
    by_actual = sorted(pairs, key=lambda t: (-t[1], t[0]))
    return [pred_rank[movie] for movie, _, _ in by_actual]


def discordant_pairs(pairs) -> int:
    return _count_inversions(rank_positions(pairs))


def kendall_tau(pairs) -> float:
    """Rank agreement of (movie_id, actual, predicted) triples.

    tau = 1 - 4 * N_D / (n (n - 1)), with N_D the number of discordant pairs
    between the actual-vote and predicted-vote orderings.
    """
    pairs = list(pairs)
    n = len(pairs)
    if n < 2:
        raise TooFewPairs(f"kendall tau needs at least 2 films, got {n}")
    if len({movie for movie, _, _ in pairs}) != n:
        raise ValueError("movie ids must be unique")
    return 1.0 - 4.0 * discordant_pairs(pairs) / (n * (n - 1))


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    n_effective: int
    p_value: float
    significant_at_95: bool
    exact: bool
    # sum of ranks of positive (a - b) differences minus the negative ones
    direction: float = 0.0

    @property
    def degenerate(self) -> bool:
        return self.n_effective == 0


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _exact_lower_tail(ranks: np.ndarray, w: float) -> float:
    """P(T+ <= w) under the null, counting all 2^n sign assignments.

    Ranks are at worst half-integers, so doubling makes every partial sum
    an integer and the count is a subset-sum convolution.
    """
    doubled = np.rint(ranks * 2).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for d in doubled:
        counts[d:] = counts[d:] + counts[: total + 1 - d]
    limit = int(math.floor(2 * w + 1e-9))
    return float(counts[: limit + 1].sum()) / 2 ** len(ranks)


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> WilcoxonResult:
    """Two-sided paired signed-rank test of a against b.

    Zero differences are dropped and tied magnitudes share average ranks.
    The null distribution is enumerated exactly up to 20 nonzero pairs;
    beyond that a tie-corrected normal approximation with continuity
    correction is used. With no nonzero differences the result is
    degenerate (p = 1).
    """
    if len(a) != len(b):
        raise LengthMismatch(f"paired samples differ in length: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise EmptyInput("wilcoxon needs at least one pair")
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    diff = diff[diff != 0]
    n = len(diff)
    if n == 0:
        return WilcoxonResult(0.0, 0, 1.0, False, True)

    ranks = _average_ranks(np.abs(diff))
    t_plus = float(ranks[diff > 0].sum())
    t_minus = float(ranks[diff < 0].sum())
    w = min(t_plus, t_minus)

    if n <= EXACT_WILCOXON_MAX_N:
        p = min(1.0, 2.0 * _exact_lower_tail(ranks, w))
        exact = True
    else:
        mean = n * (n + 1) / 4
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24 - float((tie_counts**3 - tie_counts).sum()) / 48
        z = (w - mean + 0.5) / math.sqrt(var) if var > 0 else 0.0
        p = min(1.0, math.erfc(-z / math.sqrt(2)))
        exact = False
    return WilcoxonResult(w, n, p, p < alpha, exact, t_plus - t_minus)
