"""Rejection-sampling inference over the tug-of-war world model."""

from __future__ import annotations

import hashlib
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluator import (
    GAUSSIAN_METHOD,
    Environment,
    EvalError,
    MemProc,
    Rejected,
    Value,
    World,
    analyze,
    check_finite,
    global_environment,
)
from .sexpr import Quote, SExpr, parse_one, parse_text, sym

MAX_ATTEMPTS = 10_000_000
MIN_ACCEPTANCE = 1e-6

_ASSETS = {
    "E1": "tug_of_war_e1.church",
    "E2": "tug_of_war_e2.church",
}


class ConditionTooRestrictive(EvalError):
    pass


def asset_text(experiment: str) -> str:
    """Exact bytes (decoded) of the bundled world model for E1 or E2."""
    name = _ASSETS[experiment.upper()]
    return resources.files("gradsem.church").joinpath("assets", name).read_text("utf-8")


@dataclass
class WorldModel:
    source: str
    definitions: list[SExpr] = field(default_factory=list)
    strength_mean: float = 50.0
    strength_sd: float = 20.0
    league_means: dict[str, float] = field(default_factory=lambda: {
        "beginner": 30.0, "intermediate": 50.0, "professional": 70.0})
    name: str = "custom"

    def __post_init__(self):
        if not self.definitions:
            self.definitions = parse_text(self.source)

    @classmethod
    def bundled(cls, experiment: str = "E1") -> "WorldModel":
        experiment = experiment.upper()
        return cls(asset_text(experiment), name=experiment)

    @classmethod
    def from_file(cls, path: str | Path) -> "WorldModel":
        path = Path(path)
        return cls(path.read_text("utf-8"), name=path.name)

    @property
    def source_hash(self) -> str:
        return hashlib.sha256(self.source.encode("utf-8")).hexdigest()

    def defined_names(self) -> list[str]:
        names = []
        for form in self.definitions:
            if isinstance(form, list) and len(form) >= 2 and form[0] == "define":
                target = form[1]
                names.append(str(target[0] if isinstance(target, list) else target))
        return names


@dataclass
class PosteriorSamples:
    values: list[Value]
    n_attempted: int
    n_accepted: int
    seed: int
    workers: int = 1
    method: str = GAUSSIAN_METHOD
    worlds: list[dict] | None = None

    def __post_init__(self):
        if self.n_accepted != len(self.values) or self.n_accepted > self.n_attempted:
            raise ValueError("inconsistent posterior sample counts")

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_attempted

    def numeric(self) -> np.ndarray:
        return np.array([float(v) for v in self.values])


def _strip(form: SExpr, head: str) -> SExpr:
    # accept both `(condition X)` and bare `X`
    if isinstance(form, list) and len(form) == 2 and form[0] == head:
        return form[1]
    return form


def _as_sexpr(form: SExpr | str) -> SExpr:
    return parse_one(form) if isinstance(form, str) else form


def _is_static(form: SExpr) -> bool:
    """True when a top-level definition draws no randomness when evaluated."""
    if not (isinstance(form, list) and len(form) >= 3 and form[0] == "define"):
        return False
    if isinstance(form[1], list):
        return True
    value = form[2]
    if isinstance(value, (float, bool, Quote)):
        return True
    return isinstance(value, list) and bool(value) and value[0] in ("lambda", "mem")


class _Sampler:
    """Compiled model plus conditions and query, ready to draw worlds."""

    def __init__(self, model: WorldModel, conditions: Sequence[SExpr | str], query: SExpr | str):
        self.env = Environment(parent=global_environment())
        self.static = []
        self.dynamic = []
        for form in model.definitions:
            (self.static if _is_static(form) else self.dynamic).append(analyze(form))
        self.conditions = [analyze(_strip(_as_sexpr(c), "condition")) for c in conditions]
        self.condition_src = [_as_sexpr(c) for c in conditions]
        self.query = analyze(_strip(_as_sexpr(query), "query"))
        # static definitions (procedures, `mem` wrappers, literals) need no
        # re-evaluation; `mem` caches are per-world anyway
        setup = World(random.Random(0))
        for code in self.static:
            code(self.env, setup)

    def attempt(self, world: World) -> tuple[bool, Value]:
        world.reset()
        env = self.env
        try:
            for code in self.dynamic:
                code(env, world)
            for cond in self.conditions:
                ok = cond(env, world)
                if type(ok) is not bool:
                    raise EvalError("condition did not evaluate to a boolean")
                if not ok:
                    return False, None
            return True, self.query(env, world)
        except Rejected:
            return False, None

    def snapshot(self, world: World) -> dict:
        """The world's `mem` caches keyed by global definition name."""
        names = {id(v): k for k, v in self.env.vars.items() if isinstance(v, MemProc)}
        return {names[id(proc)]: dict(cache) for proc, cache in world.caches.items()
                if id(proc) in names}

    def check(self, world: World) -> bool:
        """Re-evaluate all conditions in an existing world."""
        return all(cond(self.env, world) is True for cond in self.conditions)


def split_seeds(seed: int, workers: int) -> list[int]:
    """Independent 64-bit worker seeds derived from a master seed.

    One worker uses the master seed directly; more than one spawn child
    streams from ``numpy.random.SeedSequence(seed)`` in index order.
    """
    if workers == 1:
        return [seed]
    children = np.random.SeedSequence(seed).spawn(workers)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _sample_worker(model, conditions, query, n_accepted, seed, max_attempts,
                   min_acceptance, record_worlds):
    sampler = _Sampler(model, conditions, query)
    world = World(random.Random(seed))
    values: list[Value] = []
    worlds: list[dict] | None = [] if record_worlds else None
    attempts = 0
    # zero acceptances after this many tries already implies a rate below the floor
    early_stop = int(round(1.0 / min_acceptance))
    while len(values) < n_accepted:
        if attempts >= max_attempts:
            rate = len(values) / attempts
            raise ConditionTooRestrictive(
                f"condition too restrictive: {len(values)} of {attempts} attempts "
                f"accepted (rate {rate:.3g}); attempt cap {max_attempts} reached")
        if attempts == early_stop and not values:
            raise ConditionTooRestrictive(
                f"condition too restrictive: 0 of {attempts} attempts accepted "
                f"(rate below floor {min_acceptance:g})")
        attempts += 1
        ok, value = sampler.attempt(world)
        if ok:
            values.append(check_finite(value, "query"))
            if worlds is not None:
                worlds.append(sampler.snapshot(world))
    return values, attempts, worlds


def rejection_query(model: WorldModel, conditions: Sequence[SExpr | str], query: SExpr | str,
                    n_accepted: int, seed: int, *, workers: int = 1,
                    max_attempts: int = MAX_ATTEMPTS, min_acceptance: float = MIN_ACCEPTANCE,
                    record_worlds: bool = False) -> PosteriorSamples:
    """Sample the query under the model, keeping worlds where all conditions hold.

    Every attempt starts a fresh world (empty `mem` caches). With several
    workers the acceptance budget is split as evenly as possible, each
    worker uses its own stream from :func:`split_seeds`, and the results are
    concatenated in worker order; `max_attempts` applies per worker.
    """
    if n_accepted < 1:
        raise ValueError("n_accepted must be at least 1")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    seeds = split_seeds(seed, workers)
    budgets = [n_accepted // workers + (1 if i < n_accepted % workers else 0)
               for i in range(workers)]
    jobs = [(model, list(conditions), query, b, s, max_attempts, min_acceptance, record_worlds)
            for b, s in zip(budgets, seeds) if b > 0]
    if len(jobs) == 1:
        results = [_sample_worker(*jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            futures = [pool.submit(_sample_worker, *job) for job in jobs]
            results = [f.result() for f in futures]
    values: list[Value] = []
    attempted = 0
    worlds: list[dict] | None = [] if record_worlds else None
    for vals, att, ws in results:
        values.extend(vals)
        attempted += att
        if worlds is not None:
            worlds.extend(ws)
    return PosteriorSamples(values, attempted, len(values), seed, workers, GAUSSIAN_METHOD, worlds)


def recheck_conditions(model: WorldModel, conditions: Sequence[SExpr | str],
                       world_snapshot: dict) -> bool:
    """Re-evaluate conditions inside a world recorded by ``record_worlds``.

    Only the recorded `mem` caches are restored, so conditions must depend on
    memoized draws alone to be reproducible this way.
    """
    sampler = _Sampler(model, conditions, True)
    caches = {}
    for name, cache in world_snapshot.items():
        proc = sampler.env.vars.get(name)
        if not isinstance(proc, MemProc):
            raise EvalError(f"recorded world names unknown mem procedure '{name}'")
        caches[proc] = dict(cache)
    world = World(random.Random(0), caches)
    return sampler.check(world)


def _team(names: Sequence[str]) -> Quote:
    return Quote([sym(n) for n in names])


def run_match_query(model: WorldModel, conditions: Sequence[SExpr | str],
                    team_a: Sequence[str], team_b: Sequence[str], n_accepted: int,
                    seed: int, **kwargs) -> float:
    """Posterior probability that team_a beats team_b."""
    query = [sym("won-against"), _team(team_a), _team(team_b)]
    samples = rejection_query(model, conditions, query, n_accepted, seed, **kwargs)
    wins = 0
    for v in samples.values:
        if type(v) is not bool:
            raise EvalError("won-against did not return a boolean")
        wins += v
    return wins / samples.n_accepted


def summarize(samples: PosteriorSamples) -> dict:
    """Summary statistics of numeric or boolean posterior values."""
    out = {
        "n_accepted": samples.n_accepted,
        "n_attempted": samples.n_attempted,
        "acceptance_rate": samples.acceptance_rate,
        "seed": samples.seed,
        "workers": samples.workers,
        "gaussian_method": samples.method,
    }
    kinds = {type(v) for v in samples.values}
    if kinds <= {float} or kinds <= {bool}:
        x = np.array([float(v) for v in samples.values])
        out.update(mean=float(x.mean()),
                   sd=float(x.std(ddof=1)) if len(x) > 1 else 0.0,
                   stderr=float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0,
                   min=float(x.min()), max=float(x.max()),
                   quantiles={str(q): float(np.quantile(x, q))
                              for q in (0.05, 0.25, 0.5, 0.75, 0.95)})
    else:
        from .evaluator import format_value
        counts: dict[str, int] = {}
        for v in samples.values:
            key = format_value(v)
            counts[key] = counts.get(key, 0) + 1
        out["counts"] = dict(sorted(counts.items()))
    return out
