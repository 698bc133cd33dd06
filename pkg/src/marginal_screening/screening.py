"""Marginal statistics, retention rules and top-k screening."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sampler import Dataset

TIE_TOL = 1e-12

TOP_N = "top_n"
N_OVER_LOG_N = "n_over_log_n"
POWER = "power"
FIXED_K = "fixed_k"


class ZeroVarianceError(ValueError):
    pass


@dataclass(frozen=True)
class RetentionRule:
    """How many variables survive screening, as a function of n and p."""

    kind: str = TOP_N
    theta: float | None = None
    k: int | None = None

    def __post_init__(self):
        if self.kind not in (TOP_N, N_OVER_LOG_N, POWER, FIXED_K):
            raise ValueError(f"unknown retention rule {self.kind!r}")
        if self.kind == POWER and (self.theta is None or not 0.0 < self.theta < 1.0):
            raise ValueError(f"power rule needs 0 < theta < 1, got {self.theta!r}")
        if self.kind == FIXED_K and (self.k is None or int(self.k) != self.k or self.k < 1):
            raise ValueError(f"fixed rule needs a positive integer k, got {self.k!r}")

    @classmethod
    def top_n(cls):
        return cls(TOP_N)

    @classmethod
    def n_over_log_n(cls):
        return cls(N_OVER_LOG_N)

    @classmethod
    def power(cls, theta: float):
        return cls(POWER, theta=float(theta))

    @classmethod
    def fixed(cls, k: int):
        return cls(FIXED_K, k=int(k))

    def describe(self) -> str:
        if self.kind == POWER:
            return f"power:{self.theta!r}"
        if self.kind == FIXED_K:
            return f"fixed:{self.k}"
        return self.kind


def resolve_k(rule: RetentionRule, n: int, p: int) -> int:
    """Number of retained variables, clamped to [1, p]."""
    if n < 3:
        raise ValueError("n must be >= 3")
    if rule.kind == TOP_N:
        k = n
    elif rule.kind == N_OVER_LOG_N:
        k = math.floor(n / math.log(n))
    elif rule.kind == POWER:
        # guard against n ** (1 - theta) landing just below an exact integer
        k = math.floor(n ** (1.0 - rule.theta) * (1.0 + 1e-12))
    else:
        k = rule.k
    return max(1, min(k, p))


@dataclass(frozen=True, eq=False)
class ScreeningResult:
    """``retained`` holds sorted 1-based indices of the surviving variables."""

    w: np.ndarray
    retained: np.ndarray
    k: int
    tie_flag: bool

    @property
    def p(self) -> int:
        return self.w.shape[0]


def _centered(v: np.ndarray) -> np.ndarray:
    return v - v.mean(axis=-1, keepdims=True)


def marginal_correlations(dataset: Dataset, return_degenerate: bool = False):
    """Sample Pearson correlation of every predictor column with y.

    Two-pass: each column is centered before its cross-products are summed.
    A constant column gets correlation 0 and is reported in the degeneracy
    mask when ``return_degenerate`` is true.
    """
    if dataset.n < 3:
        raise ValueError("need n >= 3")
    y = dataset.y
    if np.ptp(y) == 0:
        raise ZeroVarianceError("response has zero sample variance")
    yc = _centered(y)
    syy = yc @ yc
    w = np.empty(dataset.p)
    degenerate = np.zeros(dataset.p, dtype=bool)
    for start, block in dataset.column_blocks():
        stop = start + block.shape[0]
        xc = _centered(block)
        sxx = np.einsum("ij,ij->i", xc, xc)
        sxy = xc @ yc
        flat = (np.ptp(block, axis=1) == 0) | (sxx == 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = sxy / np.sqrt(sxx * syy)
        r[flat] = 0.0
        w[start:stop] = np.clip(r, -1.0, 1.0)
        degenerate[start:stop] = flat
    if return_degenerate:
        return w, degenerate
    return w


def two_sample_t(dataset: Dataset, return_flags: bool = False):
    """Pooled-variance two-sample t statistic of each column, groups by y in {0, 1}.

    Positive when the y = 1 group has the larger mean. A column with zero
    pooled variance gets +/-inf (0 if the group means also agree) and is
    flagged.
    """
    y = dataset.y
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("two_sample_t needs a binary 0/1 response")
    g1 = y == 1
    n1 = int(g1.sum())
    n0 = dataset.n - n1
    if n0 == 0 or n1 == 0:
        raise ValueError("both groups must be nonempty")
    if n0 + n1 < 3:
        raise ValueError("need at least 3 observations for a pooled variance")
    t = np.empty(dataset.p)
    flags = np.zeros(dataset.p, dtype=bool)
    scale = math.sqrt(1.0 / n0 + 1.0 / n1)
    for start, block in dataset.column_blocks():
        stop = start + block.shape[0]
        a, b = block[:, g1], block[:, ~g1]
        diff = a.mean(axis=1) - b.mean(axis=1)
        ss = (np.einsum("ij,ij->i", _centered(a), _centered(a))
              + np.einsum("ij,ij->i", _centered(b), _centered(b)))
        sd = np.sqrt(ss / (n0 + n1 - 2))
        zero = sd == 0
        with np.errstate(invalid="ignore", divide="ignore"):
            ti = diff / (sd * scale)
        ti[zero] = np.where(diff[zero] > 0, np.inf,
                            np.where(diff[zero] < 0, -np.inf, 0.0))
        t[start:stop] = ti
        flags[start:stop] = zero
    if return_flags:
        return t, flags
    return t


def screen(w, k: int) -> ScreeningResult:
    """Keep the k variables with the largest |w|; ties go to the lower index.

    Expected O(p): one introselect finds the k-th and (k+1)-th largest |w|,
    then the boundary value is filled in index order.
    """
    w = np.asarray(w, dtype=float)
    p = w.shape[0]
    if not 1 <= k <= p:
        raise ValueError(f"k must lie in [1, {p}], got {k}")
    a = np.abs(w)
    neg = -a
    kth = [k - 1, k] if k < p else [k - 1]
    part = np.partition(neg, kth)
    threshold = -part[k - 1]
    above = np.flatnonzero(a > threshold)
    at = np.flatnonzero(a == threshold)[:k - above.size]
    retained = np.sort(np.concatenate([above, at])) + 1
    tie_flag = k < p and abs(threshold - (-part[k])) <= TIE_TOL
    return ScreeningResult(w, retained, k, bool(tie_flag))


def survives(result: ScreeningResult, i: int) -> bool:
    """Whether variable i (1-based) is among the retained."""
    if not 1 <= i <= result.p:
        raise IndexError(f"variable {i} out of range for p={result.p}")
    pos = np.searchsorted(result.retained, i)
    return bool(pos < result.retained.size and result.retained[pos] == i)
