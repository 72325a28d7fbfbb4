"""Empirical distributions, Jensen-Shannon distance, permutation tests, BH-FDR.

Logarithms are natural throughout, so the Jensen-Shannon distance lies in
``[0, sqrt(ln 2)]``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distribution import Distribution

LOG_BASE = "e"
JSD_MAX = math.sqrt(math.log(2.0))
SIGNIFICANCE_LEVEL = 0.05
PERMUTATION_MODES = ("both_shuffled", "model_only")
P_ESTIMATORS = ("strict", "add_one")

# null statistics within this distance of the observed one count as ties
_TIE_TOL = 1e-12


class StatisticsError(ValueError):
    pass


@dataclass(frozen=True)
class HumanResponses:
    stimulus_id: str
    estimates: tuple[float, ...]
    participant_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "estimates", tuple(float(e) for e in self.estimates))
        object.__setattr__(self, "participant_ids", tuple(str(p) for p in self.participant_ids))
        if len(self.estimates) != len(self.participant_ids):
            raise StatisticsError(f"{self.stimulus_id}: estimates and participant ids differ in length")
        for e in self.estimates:
            if not 0.0 <= e <= 100.0:
                raise StatisticsError(f"{self.stimulus_id}: estimate {e} outside [0, 100]")


@dataclass(frozen=True)
class ComparisonResult:
    stimulus_id: str
    jsd: float
    p_raw: float
    p_fdr: float
    significant: bool
    n_permutations: int
    seed: int


def nearest_bin(value: float, grid: Sequence[float]) -> int:
    """Index of the nearest grid value; exact ties go to the larger value."""
    best, best_d = 0, math.inf
    for i, g in enumerate(grid):
        d = abs(value - g)
        if d <= best_d:  # `<=` makes the later (larger) grid value win ties
            best, best_d = i, d
    return best


def empirical_distribution(responses: HumanResponses | Sequence[float], grid) -> Distribution:
    estimates = responses.estimates if isinstance(responses, HumanResponses) else tuple(responses)
    grid = tuple(float(g) for g in grid)
    if not estimates:
        raise StatisticsError("no estimates to bin")
    counts = np.zeros(len(grid))
    for e in estimates:
        counts[nearest_bin(float(e), grid)] += 1
    return Distribution(grid, counts / counts.sum())


def _pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(p, Distribution) and isinstance(q, Distribution) and p.support != q.support:
        raise StatisticsError("distributions are defined on different grids")
    pa = np.asarray(p.probs if isinstance(p, Distribution) else p, dtype=float)
    qa = np.asarray(q.probs if isinstance(q, Distribution) else q, dtype=float)
    if pa.shape != qa.shape:
        raise StatisticsError("distributions have different lengths")
    return pa, qa


def kl_divergence(p, q) -> float:
    """KL(p || q) in nats, with 0 * log(0 / q) taken as 0."""
    pa, qa = _pair(p, q)
    mask = pa > 0
    if np.any(qa[mask] == 0):
        raise StatisticsError("KL divergence undefined: p > 0 where q = 0")
    return float(np.sum(pa[mask] * np.log(pa[mask] / qa[mask])))


def jensen_shannon_distance(p, q) -> float:
    pa, qa = _pair(p, q)
    m = 0.5 * (pa + qa)
    js = 0.5 * (kl_divergence(pa, m) + kl_divergence(qa, m))
    return math.sqrt(max(js, 0.0))


def jsd_rows(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Row-wise Jensen-Shannon distance between two stacks of distributions."""
    M = 0.5 * (P + Q)
    with np.errstate(divide="ignore", invalid="ignore"):
        kp = np.where(P > 0, P * np.log(P / M), 0.0)
        kq = np.where(Q > 0, Q * np.log(Q / M), 0.0)
    js = 0.5 * (kp.sum(axis=-1) + kq.sum(axis=-1))
    return np.sqrt(np.maximum(js, 0.0))


def _exhaustive(ph: np.ndarray, pm: np.ndarray, mode: str) -> np.ndarray:
    perms = np.array(list(itertools.permutations(range(len(ph)))))
    model_rows = pm[perms]
    if mode == "model_only":
        return jsd_rows(np.broadcast_to(ph, model_rows.shape), model_rows)
    human_rows = ph[perms]
    n = len(perms)
    return jsd_rows(np.repeat(human_rows, n, axis=0), np.tile(model_rows, (n, 1)))


def permutation_null(p_human, p_model, n_iter: int = 10_000, seed: int = 0,
                     mode: str = "both_shuffled", exact: bool | None = None) -> np.ndarray:
    """Null JSD values from relabelling the theta bins.

    When the complete set of relabellings is no larger than `n_iter` (and
    `exact` is not False) every one is enumerated once instead of sampled.
    """
    if n_iter < 1:
        raise StatisticsError("n_iter must be >= 1")
    if mode not in PERMUTATION_MODES:
        raise StatisticsError(f"permutation mode must be one of {PERMUTATION_MODES}")
    ph, pm = _pair(p_human, p_model)
    k = len(ph)
    total = math.factorial(k) ** (2 if mode == "both_shuffled" else 1)
    if exact is None:
        exact = total <= n_iter
    if exact:
        return _exhaustive(ph, pm, mode)
    rng = np.random.default_rng(seed)
    model_rows = rng.permuted(np.tile(pm, (n_iter, 1)), axis=1)
    if mode == "model_only":
        human_rows = np.broadcast_to(ph, model_rows.shape)
    else:
        human_rows = rng.permuted(np.tile(ph, (n_iter, 1)), axis=1)
    return jsd_rows(human_rows, model_rows)


def permutation_test(p_human, p_model, n_iter: int = 10_000, seed: int = 0,
                     mode: str = "both_shuffled", estimator: str = "strict",
                     exact: bool | None = None) -> float:
    """p-value: share of null JSDs strictly below the observed JSD.

    ``estimator="add_one"`` returns ``(count + 1) / (N + 1)`` instead, which
    is never zero.
    """
    if estimator not in P_ESTIMATORS:
        raise StatisticsError(f"p-value estimator must be one of {P_ESTIMATORS}")
    observed = jensen_shannon_distance(p_human, p_model)
    null = permutation_null(p_human, p_model, n_iter, seed, mode, exact)
    count = int(np.count_nonzero(null < observed - _TIE_TOL))
    if estimator == "add_one":
        return (count + 1) / (len(null) + 1)
    return count / len(null)


def fdr_bh(p_values: Sequence[float]) -> list[float]:
    """Benjamini-Hochberg adjusted p-values, in input order."""
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1:
        raise StatisticsError("p-values must be a flat sequence")
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise StatisticsError("p-values must lie in [0, 1]")
    m = len(p)
    if m == 0:
        return []
    order = np.argsort(p, kind="mergesort")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adjusted, 1.0)
    return out.tolist()
