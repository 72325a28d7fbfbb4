"""Temperature softmax over candidate scores and leave-one-out temperature fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .distribution import Distribution
from .scorer.scoring import ScoreVector
from .stats import jsd_rows

DEFAULT_TOLERANCE = 1e-6
DEFAULT_MAX_ITER = 200
INIT_ALPHA = 1.0
SIMPLEX_STEP = 0.5
# exp(700) is close to the largest finite double
_LOG_ALPHA_LIMIT = 700.0


class CalibrationError(ValueError):
    pass


def softmax_array(logprobs, alpha: float) -> np.ndarray:
    """Stable ``exp(alpha * x_i) / sum_j exp(alpha * x_j)`` along the last axis."""
    x = np.asarray(logprobs, dtype=float)
    if np.any(np.isnan(x)):
        raise CalibrationError("NaN in scores")
    if not np.all(np.isfinite(x)):
        raise CalibrationError("non-finite scores")
    if alpha < 0 or not math.isfinite(alpha):
        raise CalibrationError(f"alpha must be finite and nonnegative, got {alpha}")
    z = alpha * (x - x.max(axis=-1, keepdims=True))
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def softmax(scores: ScoreVector | Sequence[float], alpha: float,
            thetas: Sequence[float] | None = None) -> Distribution:
    if isinstance(scores, ScoreVector):
        thetas, logprobs = scores.thetas, scores.logprobs
    else:
        logprobs = scores
        if thetas is None:
            thetas = tuple(range(len(logprobs)))
    return Distribution(tuple(thetas), softmax_array(logprobs, alpha))


@dataclass(frozen=True)
class NelderMeadResult:
    argmin: float
    value: float
    iterations: int
    converged: bool


def nelder_mead_minimize(objective: Callable[[float], float], init: float = INIT_ALPHA,
                         tolerance: float = DEFAULT_TOLERANCE, max_iter: int = DEFAULT_MAX_ITER,
                         step: float = SIMPLEX_STEP) -> NelderMeadResult:
    """Minimize ``objective(alpha)`` for alpha > 0 with a two-point downhill simplex.

    The simplex lives on ``a = log(alpha)``, starting at ``log(init)`` and
    ``log(init) + step``. Coefficients: reflection 1, expansion 2,
    contraction 0.5, shrink 0.5. Iteration stops once both the spread of the
    two objective values and the width of the simplex in `a` drop below
    `tolerance`, or after `max_iter` iterations.
    """
    if not init > 0:
        raise CalibrationError("init must be positive")

    def g(a: float) -> float:
        alpha = math.exp(min(max(a, -_LOG_ALPHA_LIMIT), _LOG_ALPHA_LIMIT))
        value = float(objective(alpha))
        if math.isnan(value):
            raise CalibrationError(f"objective returned NaN at alpha={alpha!r}")
        return value

    a0 = math.log(init)
    pts = [(g(a0), a0), (g(a0 + step), a0 + step)]
    iterations = 0
    converged = False
    while True:
        if pts[1][0] < pts[0][0]:
            pts.reverse()
        (fb, xb), (fw, xw) = pts
        if abs(fw - fb) < tolerance and abs(xw - xb) < tolerance:
            converged = True
            break
        if iterations >= max_iter:
            break
        iterations += 1
        xr = xb + (xb - xw)
        fr = g(xr)
        if fr < fb:
            xe = xb + 2.0 * (xb - xw)
            fe = g(xe)
            pts[1] = (fe, xe) if fe < fr else (fr, xr)
            continue
        if fr < fw:
            xc = xb + 0.5 * (xr - xb)
            fc = g(xc)
            if fc <= fr:
                pts[1] = (fc, xc)
                continue
        else:
            xc = xb + 0.5 * (xw - xb)
            fc = g(xc)
            if fc < fw:
                pts[1] = (fc, xc)
                continue
        xs = xb + 0.5 * (xw - xb)
        pts[1] = (g(xs), xs)
    fb, xb = pts[0]
    return NelderMeadResult(math.exp(min(max(xb, -_LOG_ALPHA_LIMIT), _LOG_ALPHA_LIMIT)),
                            fb, iterations, converged)


@dataclass(frozen=True)
class TemperatureFit:
    stimulus_id: str
    alpha: float
    loss: float
    iterations: int
    converged: bool
    pool: str = ""
    complement: tuple[str, ...] = ()


def summed_jsd_objective(scores: Mapping[str, ScoreVector], human: Mapping[str, Distribution],
                         ids: Sequence[str]) -> Callable[[float], float]:
    """Sum over `ids` of JSD(human, softmax(scores, alpha)), in the given order."""
    L = np.array([scores[i].logprobs for i in ids], dtype=float)
    H = np.array([human[i].probs for i in ids], dtype=float)

    def objective(alpha: float) -> float:
        return float(jsd_rows(H, softmax_array(L, alpha)).sum())
    return objective


def fit_alpha_loocv(scores: Mapping[str, ScoreVector], human: Mapping[str, Distribution],
                    groups: Mapping[str, str] | None = None,
                    tolerance: float = DEFAULT_TOLERANCE,
                    max_iter: int = DEFAULT_MAX_ITER) -> dict[str, TemperatureFit]:
    """Fit one temperature per stimulus on every other stimulus in its pool.

    `groups` maps stimulus id to a pool label (experiment, or panel); by
    default all stimuli share one pool. The held-out stimulus never enters
    its own objective.
    """
    if set(scores) != set(human):
        raise CalibrationError("scores and human distributions cover different stimuli")
    for sid in scores:
        if tuple(scores[sid].thetas) != tuple(human[sid].support):
            raise CalibrationError(f"{sid}: score and human grids differ")
    groups = groups or {sid: "all" for sid in scores}
    pools: dict[str, list[str]] = {}
    for sid in sorted(scores):
        pools.setdefault(groups[sid], []).append(sid)
    fits: dict[str, TemperatureFit] = {}
    for pool, members in sorted(pools.items()):
        if len(members) < 2:
            raise CalibrationError(
                f"LOOCV undefined: pool {pool!r} has a single stimulus ({members[0]})")
        for sid in members:
            complement = [other for other in members if other != sid]
            result = nelder_mead_minimize(summed_jsd_objective(scores, human, complement),
                                          INIT_ALPHA, tolerance, max_iter)
            fits[sid] = TemperatureFit(sid, result.argmin, result.value, result.iterations,
                                       result.converged, pool, tuple(complement))
    return {sid: fits[sid] for sid in scores}
