"""Nonparametric tests: Wilcoxon signed-rank and Mann-Whitney U.

Both are exact on small samples (full enumeration / distribution counting)
and switch to the tie-corrected normal approximation beyond that.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, erfc, sqrt
from typing import Sequence

import numpy as np

WILCOXON_EXACT_MAX_N = 12
MANNWHITNEY_EXACT_MAX_NM = 200


@dataclass
class StatResult:
    p: float
    statistic: float
    method: str  # "exact" | "normal"
    flags: dict = field(default_factory=dict)


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_v = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _two_sided_from_counts(count_le: int, count_ge: int, total: int) -> float:
    return min(1.0, 2.0 * min(count_le, count_ge) / total)


def _normal_two_sided(z: float) -> float:
    return erfc(abs(z) / sqrt(2.0))


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> StatResult:
    """Two-sided paired test on the signed ranks of a - b; zero differences
    are dropped. Exact over all sign assignments for n <= 12."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("wilcoxon needs equal-length paired 1D arrays")
    d = a - b
    zero_count = int((d == 0).sum())
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return StatResult(p=1.0, statistic=0.0, method="exact",
                          flags={"all_zero": True, "zeros_dropped": zero_count})
    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())

    if n <= WILCOXON_EXACT_MAX_N:
        total = 1 << n
        count_le = 0
        count_ge = 0
        for mask in range(total):
            w = 0.0
            for i in range(n):
                if mask >> i & 1:
                    w += ranks[i]
            if w <= w_plus:
                count_le += 1
            if w >= w_plus:
                count_ge += 1
        p = _two_sided_from_counts(count_le, count_ge, total)
        return StatResult(p=p, statistic=w_plus, method="exact",
                          flags={"zeros_dropped": zero_count})

    mu = n * (n + 1) / 4.0
    # tie correction over groups of equal |d|
    _, counts = np.unique(np.abs(d), return_counts=True)
    tie_term = float(((counts**3 - counts)).sum()) / 48.0
    sigma = sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_term)
    z = (w_plus - mu) / sigma
    return StatResult(p=_normal_two_sided(z), statistic=w_plus, method="normal",
                      flags={"zeros_dropped": zero_count})


def _u_count_distribution(n: int, m: int) -> list:
    """counts[u] = number of arrangements of n vs m untied values with U = u.

    Largest-element recurrence on the generating polynomial,
    f(i, j) = q^j f(i-1, j) + f(i, j-1), in exact integers.
    """
    prev = [[1] for _ in range(m + 1)]  # f(0, j)
    for _ in range(1, n + 1):
        cur: list = []
        for j in range(m + 1):
            if j == 0:
                cur.append([1])
                continue
            shifted = [0] * j + prev[j]
            other = cur[j - 1]
            size = max(len(shifted), len(other))
            poly = [0] * size
            for u, v in enumerate(shifted):
                poly[u] += v
            for u, v in enumerate(other):
                poly[u] += v
            cur.append(poly)
        prev = cur
    dist = [0] * (n * m + 1)
    for u, v in enumerate(prev[m]):
        dist[u] = v
    return dist


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> StatResult:
    """Two-sided independent-samples test; exact (distribution counting)
    when untied and n*m <= 200, tie-corrected normal otherwise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or len(a) == 0 or len(b) == 0:
        raise ValueError("mann-whitney needs two non-empty 1D arrays")
    n, m = len(a), len(b)
    combined = np.concatenate([a, b])
    ranks = _midranks(combined)
    r1 = float(ranks[:n].sum())
    u1 = r1 - n * (n + 1) / 2.0
    has_ties = len(np.unique(combined)) < n + m

    if not has_ties and n * m <= MANNWHITNEY_EXACT_MAX_NM:
        dist = _u_count_distribution(n, m)
        total = comb(n + m, n)
        assert sum(dist) == total
        u_int = int(round(u1))
        count_le = int(sum(dist[: u_int + 1]))
        count_ge = int(sum(dist[u_int:]))
        p = _two_sided_from_counts(count_le, count_ge, total)
        return StatResult(p=p, statistic=u1, method="exact", flags={})

    nm = n + m
    mu = n * m / 2.0
    _, counts = np.unique(combined, return_counts=True)
    tie_term = float((counts**3 - counts).sum()) / (nm * (nm - 1))
    sigma = sqrt(n * m / 12.0 * (nm + 1 - tie_term))
    z = (u1 - mu) / sigma
    return StatResult(p=_normal_two_sided(z), statistic=u1, method="normal",
                      flags={"ties": bool(has_ties)})
