"""Rational Speech Acts reference model with an uncertain threshold.

A literal listener restricts the strength prior to values satisfying an
utterance at a given threshold; the speaker chooses utterances softmax-
optimally with respect to that listener; the pragmatic listener inverts the
speaker jointly over strength and threshold. Everything is an exact sum
over discrete grids.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .distribution import Distribution

# meaning name -> predicate over (strength, theta) arrays
MEANINGS: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "above": lambda s, t: s > t,
    "below": lambda s, t: s < t,
    "true": lambda s, t: np.ones(np.broadcast(s, t).shape, dtype=bool),
}


class RSAError(ValueError):
    pass


def discretized_normal(grid: Sequence[float], mean: float = 50.0, sd: float = 20.0) -> Distribution:
    """Normal density evaluated at the grid points, renormalized."""
    x = np.asarray(grid, dtype=float)
    return Distribution.from_weights(tuple(grid), np.exp(-0.5 * ((x - mean) / sd) ** 2))


def _grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    n = int(round((stop - start) / step))
    return tuple(float(start + i * step) for i in range(n + 1))


@dataclass
class RSAConfig:
    strength_grid: tuple[float, ...] = field(default_factory=lambda: _grid(0, 100, 2))
    theta_grid: tuple[float, ...] = field(default_factory=lambda: _grid(0, 100, 10))
    strength_prior: Distribution | None = None
    theta_prior: Distribution | None = None
    utterances: dict[str, str] = field(default_factory=lambda: {"strong": "above", "null": "true"})
    rationality: float = 1.0
    costs: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.strength_grid = tuple(float(s) for s in self.strength_grid)
        self.theta_grid = tuple(float(t) for t in self.theta_grid)
        if self.strength_prior is None:
            self.strength_prior = discretized_normal(self.strength_grid)
        if self.theta_prior is None:
            self.theta_prior = Distribution.uniform(self.theta_grid)
        if tuple(self.strength_prior.support) != self.strength_grid:
            raise RSAError("strength prior is not defined on the strength grid")
        if tuple(self.theta_prior.support) != self.theta_grid:
            raise RSAError("theta prior is not defined on the theta grid")
        for u, meaning in self.utterances.items():
            if meaning not in MEANINGS:
                raise RSAError(f"utterance {u!r} has unknown meaning {meaning!r}")
        if not self.rationality >= 0:
            raise RSAError("rationality must be nonnegative")
        self.costs = {u: float(self.costs.get(u, 0.0)) for u in self.utterances}
        if any(c < 0 for c in self.costs.values()):
            raise RSAError("costs must be nonnegative")

    @property
    def utterance_labels(self) -> tuple[str, ...]:
        return tuple(self.utterances)

    def truth(self, utterance: str, s, t) -> np.ndarray:
        return MEANINGS[self.utterances[utterance]](np.asarray(s, dtype=float),
                                                     np.asarray(t, dtype=float))

    def to_dict(self) -> dict[str, Any]:
        return {
            "strength_grid": list(self.strength_grid),
            "theta_grid": list(self.theta_grid),
            "strength_prior": self.strength_prior.probs.tolist(),
            "theta_prior": self.theta_prior.probs.tolist(),
            "utterances": dict(self.utterances),
            "rationality": self.rationality,
            "costs": dict(self.costs),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RSAConfig":
        """Build a config from plain data.

        Grids may be lists or ``{"start", "stop", "step"}``; the strength
        prior may be a list of weights or ``{"normal": {"mean", "sd"}}``;
        the theta prior a list of weights or ``"uniform"``.
        """
        data = dict(data)
        kwargs: dict[str, Any] = {}
        for key in ("strength_grid", "theta_grid"):
            if key in data:
                g = data[key]
                kwargs[key] = _grid(g["start"], g["stop"], g["step"]) if isinstance(g, dict) else tuple(g)
        cfg = cls(**kwargs, utterances=data.get("utterances", {"strong": "above", "null": "true"}),
                  rationality=float(data.get("rationality", 1.0)), costs=data.get("costs", {}))
        sp = data.get("strength_prior")
        if isinstance(sp, dict) and "normal" in sp:
            cfg.strength_prior = discretized_normal(cfg.strength_grid, **sp["normal"])
        elif sp is not None:
            cfg.strength_prior = Distribution.from_weights(cfg.strength_grid, sp)
        tp = data.get("theta_prior")
        if tp is not None and tp != "uniform":
            cfg.theta_prior = Distribution.from_weights(cfg.theta_grid, tp)
        cfg.__post_init__()
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "RSAConfig":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))


@dataclass(frozen=True, eq=False)
class JointDistribution:
    strength: tuple[float, ...]
    thetas: tuple[float, ...]
    probs: np.ndarray  # shape (len(strength), len(thetas))

    def theta_marginal(self) -> Distribution:
        return Distribution(self.thetas, self.probs.sum(axis=0))

    def strength_marginal(self) -> Distribution:
        return Distribution(self.strength, self.probs.sum(axis=1))


def _check_utterance(utterance: str, config: RSAConfig) -> None:
    if utterance not in config.utterances:
        raise RSAError(f"unknown utterance {utterance!r}; known: {list(config.utterances)}")


def literal_listener(utterance: str, theta: float, config: RSAConfig) -> Distribution:
    _check_utterance(utterance, config)
    s = np.asarray(config.strength_grid)
    prior = config.strength_prior.probs
    truth = config.truth(utterance, s, theta)
    weights = prior * truth
    if not weights.sum() > 0:
        raise RSAError(f"vacuous literal meaning: {utterance!r} at theta={theta} has no prior mass")
    if truth[prior > 0].all():
        return config.strength_prior  # nothing is ruled out
    return Distribution(config.strength_grid, weights / weights.sum())


def _literal_table(config: RSAConfig) -> tuple[np.ndarray, np.ndarray]:
    """Truth values and literal-listener probabilities, shape (U, S, T)."""
    s = np.asarray(config.strength_grid)[:, None]
    t = np.asarray(config.theta_grid)[None, :]
    prior = config.strength_prior.probs[:, None]
    truth = np.stack([config.truth(u, s, t) for u in config.utterance_labels])
    mass = prior[None] * truth
    z = mass.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        l0 = np.where(z > 0, mass / z, 0.0)
    return truth, l0


def _speaker_table(config: RSAConfig) -> np.ndarray:
    """S1(u | s, theta), shape (U, S, T); all-zero where nothing is true.

    At rationality 0 the speaker ignores both meaning and cost and is
    uniform over the utterance set.
    """
    truth, l0 = _literal_table(config)
    lam = config.rationality
    n_u = truth.shape[0]
    if lam == 0:
        return np.full(truth.shape, 1.0 / n_u)
    costs = np.array([config.costs[u] for u in config.utterance_labels])[:, None, None]
    usable = truth & (l0 > 0)
    with np.errstate(divide="ignore"):
        utility = np.where(usable, np.log(np.where(usable, l0, 1.0)) - costs, -np.inf)
    peak = utility.max(axis=0, keepdims=True)
    finite_peak = np.where(np.isfinite(peak), peak, 0.0)
    weights = np.where(usable, np.exp(lam * (utility - finite_peak)), 0.0)
    total = weights.sum(axis=0, keepdims=True)
    with np.errstate(invalid="ignore"):
        return np.where(total > 0, weights / np.where(total > 0, total, 1.0), 0.0)


def speaker(strength: float, theta: float, config: RSAConfig) -> Distribution:
    if strength not in config.strength_grid:
        raise RSAError(f"strength {strength} is not on the strength grid")
    s = np.array([strength])
    truth = np.array([bool(config.truth(u, s, theta)[0]) for u in config.utterance_labels])
    if not truth.any():
        raise RSAError(f"no utterance is true of strength {strength} at theta {theta}")
    if config.rationality == 0:
        return Distribution.uniform(config.utterance_labels)
    utilities = []
    for u, ok in zip(config.utterance_labels, truth):
        if ok:
            l0 = literal_listener(u, theta, config)
            p = l0.probs[config.strength_grid.index(strength)]
            utilities.append(math.log(p) - config.costs[u] if p > 0 else -math.inf)
        else:
            utilities.append(-math.inf)
    util = np.array(utilities)
    if not np.isfinite(util).any():
        raise RSAError(f"strength {strength} has zero prior mass under every true utterance")
    w = np.where(np.isfinite(util), np.exp(config.rationality * (util - util[np.isfinite(util)].max())), 0.0)
    return Distribution(config.utterance_labels, w / w.sum())


def pragmatic_listener(utterance: str, config: RSAConfig) -> tuple[JointDistribution, Distribution]:
    """Joint posterior over (strength, theta) and its theta marginal."""
    _check_utterance(utterance, config)
    s1 = _speaker_table(config)[config.utterance_labels.index(utterance)]
    theta_prior = config.theta_prior.probs
    joint = config.strength_prior.probs[:, None] * theta_prior[None, :] * s1
    total = joint.sum()
    if not total > 0:
        raise RSAError(f"pragmatic listener has no mass for {utterance!r}")
    jd = JointDistribution(config.strength_grid, config.theta_grid, joint / total)
    # P(u | theta); where it is constant over the prior's support the
    # posterior is the prior itself, returned as is to avoid rounding
    likelihood = (config.strength_prior.probs[:, None] * s1).sum(axis=0)
    on_support = likelihood[theta_prior > 0]
    if np.all(on_support == on_support[0]):
        return jd, config.theta_prior
    return jd, jd.theta_marginal()
