import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradsem.calibrate import (
    CalibrationError,
    fit_alpha_loocv,
    nelder_mead_minimize,
    softmax,
    softmax_array,
    summed_jsd_objective,
)
from gradsem.distribution import Distribution
from gradsem.scorer import ScoreVector
from gradsem.stats import jensen_shannon_distance

THETAS = tuple(float(t) for t in range(0, 101, 10))
finite = st.floats(-50, 50, allow_nan=False)


def test_softmax_reference_vector():
    p = softmax([0.0, -1.0, -2.0], 1.0).probs
    # high-precision evaluation, independent of numpy
    z = sum(math.exp(-k) for k in range(3))
    assert np.allclose(p, [1 / z, math.exp(-1) / z, math.exp(-2) / z], atol=1e-15)
    assert np.allclose(p, [0.66524, 0.24473, 0.09003], atol=1e-5)


def test_softmax_uniform_cases():
    assert np.allclose(softmax([-3.0] * 11, 2.5).probs, 1 / 11)
    assert np.allclose(softmax([0.0, -4.0, -9.0], 0.0).probs, 1 / 3)


def test_softmax_rejects_nan():
    with pytest.raises(CalibrationError, match="NaN"):
        softmax([0.0, float("nan")], 1.0)
    with pytest.raises(CalibrationError):
        softmax([0.0, -1.0], -1.0)


def test_softmax_extreme_values_stable():
    p = softmax_array([-1e4, -1e4 - 1, -2e4], 50.0)
    assert np.all(np.isfinite(p)) and p[0] > 0.999


@given(st.lists(finite, min_size=2, max_size=11), st.floats(0, 20), st.floats(-1e3, 1e3))
def test_shift_invariance(xs, alpha, c):
    a = softmax_array(xs, alpha)
    b = softmax_array([x + c for x in xs], alpha)
    assert np.max(np.abs(a - b)) <= 1e-12


# scores on a 0.01 lattice so that alpha * difference stays above float resolution
@given(st.lists(st.integers(-5000, 5000).map(lambda k: k / 100), min_size=2, max_size=11, unique=True),
       st.floats(0.01, 20))
def test_argmax_preserved(xs, alpha):
    assert int(np.argmax(softmax_array(xs, alpha))) == int(np.argmax(xs))


@given(st.lists(finite, min_size=2, max_size=11))
def test_monotone_sharpening(xs):
    top = int(np.argmax(xs))
    ps = [softmax_array(xs, a)[top] for a in (0.5, 1.0, 2.0, 4.0)]
    assert all(b >= a - 1e-15 for a, b in zip(ps, ps[1:]))


def test_nelder_mead_quadratic():
    r = nelder_mead_minimize(lambda a: (a - 2) ** 2, 1.0, 1e-6, 200)
    assert abs(r.argmin - 2) < 1e-4 and r.converged


def test_nelder_mead_abs():
    r = nelder_mead_minimize(lambda a: abs(a - 0.3), 1.0, 1e-6, 200)
    assert abs(r.argmin - 0.3) < 1e-3


def test_nelder_mead_nan_names_probe():
    with pytest.raises(CalibrationError, match="alpha="):
        nelder_mead_minimize(lambda a: float("nan") if a > 1.2 else -a)


def test_nelder_mead_iteration_cap():
    r = nelder_mead_minimize(lambda a: (a - 50) ** 2, max_iter=3)
    assert r.iterations == 3 and not r.converged


def test_nelder_mead_matches_grid_on_random_objectives():
    rng = np.random.default_rng(123)
    grid = np.round(np.arange(1, 1001) * 0.01, 2)
    for _ in range(20):
        c, w, q = rng.uniform(0.2, 8.0), rng.uniform(0.2, 3.0), rng.uniform(0.0, 0.5)
        f = lambda a, c=c, w=w, q=q: w * (a - c) ** 2 + q * (a - c) ** 4 + math.log1p(a)
        best = grid[int(np.argmin([f(a) for a in grid]))]
        assert abs(nelder_mead_minimize(f).argmin - best) <= 0.01 + 1e-9


def _vec(sid, target, width=15.0):
    return ScoreVector(sid, THETAS, tuple(-((t - target) ** 2) / (2 * width ** 2) for t in THETAS))


def _human(weights):
    return Distribution.from_weights(THETAS, weights)


def _peaked(center, spread):
    return _human(np.exp(-0.5 * ((np.array(THETAS) - center) / spread) ** 2))


def test_loocv_single_stimulus_error():
    with pytest.raises(CalibrationError, match="LOOCV undefined"):
        fit_alpha_loocv({"a": _vec("a", 50)}, {"a": _peaked(50, 10)})


def test_loocv_degenerate_objective():
    flat = ScoreVector("a", THETAS, (0.0,) * 11)
    scores = {"a": flat, "b": ScoreVector("b", THETAS, (-1.0,) * 11)}
    human = {k: Distribution.uniform(THETAS) for k in scores}
    fits = fit_alpha_loocv(scores, human)
    for f in fits.values():
        assert math.isfinite(f.alpha) and f.alpha > 0 and f.loss == pytest.approx(0, abs=1e-12)


def test_loocv_two_stimuli_use_complement_only():
    scores = {"a": _vec("a", 40), "b": _vec("b", 70)}
    human = {"a": _peaked(40, 6), "b": _peaked(70, 25)}
    fits = fit_alpha_loocv(scores, human)
    grid = np.arange(1, 2001) * 0.01
    for held, other in (("a", "b"), ("b", "a")):
        losses = [jensen_shannon_distance(human[other], softmax(scores[other], a)) for a in grid]
        assert abs(fits[held].alpha - grid[int(np.argmin(losses))]) <= 0.01
        assert fits[held].complement == (other,)
    assert fits["a"].alpha < fits["b"].alpha  # b's own sharp human data does not leak into b


def test_loocv_leakage():
    rng = np.random.default_rng(0)
    ids = [f"s{i}" for i in range(6)]
    scores = {s: _vec(s, rng.uniform(20, 80)) for s in ids}
    human = {s: _peaked(rng.uniform(20, 80), rng.uniform(5, 20)) for s in ids}
    base = fit_alpha_loocv(scores, human)
    for s in ids:
        perturbed = dict(human, **{s: Distribution.from_weights(THETAS, rng.uniform(0, 1, 11))})
        assert fit_alpha_loocv(scores, perturbed)[s].alpha == base[s].alpha


def test_loocv_order_invariant():
    rng = np.random.default_rng(5)
    ids = [f"s{i}" for i in range(5)]
    scores = {s: _vec(s, rng.uniform(20, 80)) for s in ids}
    human = {s: _peaked(rng.uniform(20, 80), 10) for s in ids}
    a = fit_alpha_loocv(scores, human)
    rev = fit_alpha_loocv(dict(reversed(list(scores.items()))), dict(reversed(list(human.items()))))
    assert {k: v.alpha for k, v in a.items()} == {k: v.alpha for k, v in rev.items()}


def test_loocv_per_panel_groups():
    ids = ["a1", "a2", "b1", "b2"]
    scores = {s: _vec(s, 50) for s in ids}
    human = {s: _peaked(50, 8) for s in ids}
    fits = fit_alpha_loocv(scores, human, {"a1": "A", "a2": "A", "b1": "B", "b2": "B"})
    assert fits["a1"].complement == ("a2",) and fits["b2"].complement == ("b1",)


def test_loocv_grid_mismatch():
    other = ScoreVector("b", tuple(range(11)), (0.0,) * 11)
    with pytest.raises(CalibrationError):
        fit_alpha_loocv({"a": _vec("a", 50), "b": other}, {"a": _peaked(50, 5), "b": _peaked(50, 5)})


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_objective_nonnegative(seed):
    rng = np.random.default_rng(seed)
    scores = {s: _vec(s, rng.uniform(0, 100)) for s in "abc"}
    human = {s: _human(rng.uniform(0, 1, 11)) for s in "abc"}
    f = summed_jsd_objective(scores, human, list("abc"))
    assert all(f(a) >= 0 for a in (0.01, 1.0, 30.0))
