"""Acceptance criteria 1-10, each checked at its stated tolerance."""

import hashlib
import itertools
import math
import time

import numpy as np

from acceptance_report import criterion
from fake_lm import FakeServer
from gradsem.calibrate import fit_alpha_loocv, nelder_mead_minimize, softmax_array, summed_jsd_objective
from gradsem.church import rejection_query
from gradsem.cli import main
from gradsem.distribution import Distribution
from gradsem.rsa import RSAConfig, pragmatic_listener
from gradsem.scorer import BackendConfig, MockParams, PromptBundle, Stimulus, score_stimulus
from gradsem.stats import empirical_distribution, fdr_bh, jensen_shannon_distance, permutation_test

THETAS = tuple(float(t) for t in range(0, 101, 10))


def truncated_normal_mean(mu, sigma, t):
    z = (t - mu) / sigma
    phi = math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    return mu + sigma * phi / (0.5 * math.erfc(z / math.sqrt(2)))


def test_c1_prior_fidelity(e1_model, e2_model):
    with criterion(1, "prior mean/sd of strength; E2 league priors; 100k samples < 5 s"):
        start = time.perf_counter()
        x = rejection_query(e1_model, [], "(strength 'jack)", 100_000, 2024).numeric()
        elapsed = time.perf_counter() - start
        assert abs(x.mean() - 50) <= 0.5, x.mean()
        assert abs(x.std(ddof=1) - 20) <= 0.5, x.std(ddof=1)
        assert elapsed < 5.0, elapsed
        for league, mean in (("beginner", 30), ("intermediate", 50), ("professional", 70)):
            y = rejection_query(e2_model, [f"(equal? (league 'jack) '{league})"], "(strength 'jack)",
                                20_000, 2024).numeric()
            assert abs(y.mean() - mean) <= 0.5, (league, y.mean())


def test_c2_truncation_oracle(e1_model):
    with criterion(2, "posterior mean under strength > 80 within 3 SE of 88.77; < 30 s"):
        start = time.perf_counter()
        x = rejection_query(e1_model, ["(> (strength 'jack) 80)"], "(strength 'jack)", 50_000, 2024).numeric()
        elapsed = time.perf_counter() - start
        target = truncated_normal_mean(50, 20, 80)
        assert round(target, 2) == 88.77
        se = x.std(ddof=1) / math.sqrt(len(x))
        assert abs(x.mean() - target) <= 3 * se, (x.mean(), target, se)
        assert elapsed < 30.0, elapsed


def test_c3_softmax_suite():
    with criterion(3, "softmax: alpha=0 uniform, shift invariance, reference vector, sharpening"):
        rng = np.random.default_rng(3)
        for _ in range(200):
            x = rng.normal(0, 5, 11)
            assert np.array_equal(softmax_array(x, 0.0), np.full(11, 1 / 11))
            alpha, c = rng.uniform(0, 10), rng.uniform(-100, 100)
            assert np.max(np.abs(softmax_array(x, alpha) - softmax_array(x + c, alpha))) <= 1e-12
            top = int(np.argmax(x))
            ps = [softmax_array(x, a)[top] for a in (0.5, 1.0, 2.0, 4.0)]
            assert all(b >= a for a, b in zip(ps, ps[1:]))
        ref = softmax_array([0.0, -1.0, -2.0], 1.0)
        assert np.max(np.abs(ref - [0.66524, 0.24473, 0.09003])) <= 1e-5


def brute_jsd(p, q):
    m = [(a + b) / 2 for a, b in zip(p, q)]
    kl_pm = sum(a * math.log(a / c) for a, c in zip(p, m) if a > 0)
    kl_qm = sum(b * math.log(b / c) for b, c in zip(q, m) if b > 0)
    return math.sqrt(max(0.0, 0.5 * kl_pm + 0.5 * kl_qm))


def sparse_dist(rng):
    w = rng.dirichlet(np.ones(11))
    w[rng.uniform(size=11) < 0.3] = 0
    if w.sum() == 0:
        w[0] = 1
    return w / w.sum()


def test_c4_jsd_suite():
    with criterion(4, "JSD: identity, symmetry, disjoint max, triangle inequality, brute-force match"):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            p, q, r = sparse_dist(rng), sparse_dist(rng), sparse_dist(rng)
            assert jensen_shannon_distance(p, p) == 0
            pq = jensen_shannon_distance(p, q)
            assert pq == jensen_shannon_distance(q, p)
            assert jensen_shannon_distance(p, r) <= pq + jensen_shannon_distance(q, r) + 1e-12
        for i, j in itertools.permutations(range(11), 2):
            d = jensen_shannon_distance(np.eye(11)[i], np.eye(11)[j])
            assert abs(d - math.sqrt(math.log(2))) <= 1e-10
        for _ in range(100):
            p, q = sparse_dist(rng), sparse_dist(rng)
            assert abs(jensen_shannon_distance(p, q) - brute_jsd(list(p), list(q))) <= 1e-12


def test_c5_permutation_test():
    with criterion(5, "permutation test: 3-bin exact enumeration, identical inputs, seeded repeat; < 10 s each"):
        start = time.perf_counter()
        p, q = [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]
        obs = brute_jsd(p, q)
        perms = list(itertools.permutations(range(3)))
        below = sum(brute_jsd([p[i] for i in a], [q[i] for i in b]) < obs for a in perms for b in perms)
        assert permutation_test(p, q, 10_000, seed=0) == below / 36
        assert time.perf_counter() - start < 10

        start = time.perf_counter()
        same = sparse_dist(np.random.default_rng(5))
        assert permutation_test(same, same, 10_000, seed=5) == 0.0
        assert time.perf_counter() - start < 10

        start = time.perf_counter()
        rng = np.random.default_rng(55)
        h, m = sparse_dist(rng), sparse_dist(rng)
        first = permutation_test(h, m, 10_000, seed=123456789)
        assert repr(first) == repr(permutation_test(h, m, 10_000, seed=123456789))
        assert time.perf_counter() - start < 10


def brute_bh(p):
    m = len(p)
    out = []
    for pi in p:
        best = 1.0
        for pj in p:
            if pj >= pi:
                rank = sum(1 for pk in p if pk <= pj)
                best = min(best, m * pj / rank)
        out.append(best)
    return out


def test_c6_fdr_oracle():
    with criterion(6, "BH-FDR matches brute-force step-up on 1,000 vectors; worked example"):
        rng = np.random.default_rng(6)
        for _ in range(1000):
            p = rng.uniform(size=int(rng.integers(1, 51)))
            assert np.max(np.abs(np.array(fdr_bh(p)) - brute_bh(list(p)))) <= 1e-12
        assert np.max(np.abs(np.array(fdr_bh([0.01, 0.02, 0.04, 0.05])) - [0.04, 0.04, 0.05, 0.05])) <= 1e-12


def mock_fixture(seed, n_stimuli=8):
    """Mock-backend score vectors plus synthetic human distributions."""
    rng = np.random.default_rng(seed)
    targets = {f"s{i}": float(rng.uniform(15, 85)) for i in range(n_stimuli)}
    cfg = BackendConfig(kind="mock", mock_params=MockParams(targets, float(rng.uniform(8, 25)),
                                                            0.3, seed))
    bundle = PromptBundle.for_experiment("E1")
    scores, human = {}, {}
    for sid, target in targets.items():
        stim = Stimulus(sid, f"Sentence {sid}.", "exceeds", "E1")
        scores[sid] = score_stimulus(cfg, bundle, stim)
        estimates = np.clip(rng.normal(target + rng.normal(0, 5), rng.uniform(5, 20), 29), 0, 100)
        human[sid] = empirical_distribution(estimates, THETAS)
    return scores, human


def test_c7_loocv_leakage_and_grid_oracle():
    with criterion(7, "LOOCV leakage-free; Nelder-Mead within 0.01 of grid search on 20 fixtures; < 60 s"):
        start = time.perf_counter()
        grid = np.round(np.arange(1, 3001) * 0.01, 2)
        for seed in range(20):
            scores, human = mock_fixture(seed)
            fits = fit_alpha_loocv(scores, human)
            for sid in scores:
                complement = [o for o in sorted(scores) if o != sid]
                f = summed_jsd_objective(scores, human, complement)
                best = grid[int(np.argmin([f(a) for a in grid]))]
                assert abs(fits[sid].alpha - best) <= 0.01 + 1e-9, (seed, sid, fits[sid].alpha, best)
            rng = np.random.default_rng(1000 + seed)
            held = sorted(scores)[seed % len(scores)]
            noisy = dict(human, **{held: Distribution.from_weights(THETAS, rng.uniform(0, 1, 11))})
            assert fit_alpha_loocv(scores, noisy)[held].alpha == fits[held].alpha
        assert time.perf_counter() - start < 60


def brute_l1_theta(cfg, utterance):
    S, T, U = cfg.strength_grid, cfg.theta_grid, cfg.utterance_labels
    ps, pt = list(cfg.strength_prior.probs), list(cfg.theta_prior.probs)

    def true(u, s, t):
        return s > t if cfg.utterances[u] == "above" else True

    out = []
    for j, t in enumerate(T):
        total = 0.0
        for i, s in enumerate(S):
            scores = {}
            for u in U:
                if true(u, s, t):
                    z = sum(ps[k] for k, s2 in enumerate(S) if true(u, s2, t))
                    scores[u] = math.exp(cfg.rationality * (math.log(ps[i] / z) - cfg.costs[u]))
            if utterance in scores:
                total += ps[i] * pt[j] * scores[utterance] / sum(scores.values())
        out.append(total)
    return [x / sum(out) for x in out]


def test_c8_rsa_oracle():
    with criterion(8, "RSA L1 theta-marginal vs brute-force enumeration; degenerate identities exact"):
        cfg = RSAConfig()
        _, marginal = pragmatic_listener("strong", cfg)
        assert np.max(np.abs(marginal.probs - brute_l1_theta(cfg, "strong"))) <= 1e-10
        for t in cfg.theta_grid[:-1]:
            point = Distribution(cfg.theta_grid, [1.0 if x == t else 0.0 for x in cfg.theta_grid])
            _, m = pragmatic_listener("strong", RSAConfig(theta_prior=point))
            assert np.array_equal(m.probs, point.probs)
        lam0 = RSAConfig(rationality=0.0)
        for u in lam0.utterance_labels:
            _, m = pragmatic_listener(u, lam0)
            assert np.array_equal(m.probs, lam0.theta_prior.probs)


def test_c9_end_to_end_determinism(tmp_path):
    with criterion(9, "full E1 mock run, N=10,000: byte-identical tables, control mode at 50; < 2 min"):
        human = tmp_path / "human.csv"
        assert main(["synth-human", "--experiment", "e1", "--participants", "29", "--seed", "9",
                     "--out", str(human)]) == 0
        start = time.perf_counter()
        tables = []
        for k in range(2):
            out = tmp_path / f"run{k}"
            assert main(["run", "--experiment", "e1", "--human", str(human), "--backend", "mock",
                         "--seed", "7", "--permutations", "10000", "--out", str(out)]) == 0
            tables.append((out / "results.csv").read_bytes())
        elapsed = time.perf_counter() - start
        assert tables[0] == tables[1]
        assert elapsed < 120, elapsed
        header, *rows = tables[0].decode().splitlines()
        cols = header.split(",")
        control = next(r.split(",") for r in rows if r.startswith("e1_a_control,"))
        model = [float(control[cols.index(f"model_p_{int(t)}")]) for t in THETAS]
        assert THETAS[int(np.argmax(model))] == 50.0


def test_c10_offline_replay(tmp_path):
    with criterion(10, "E2 run recorded over HTTP replays offline with the same table hash"):
        human = tmp_path / "human.csv"
        assert main(["synth-human", "--experiment", "e2", "--participants", "30", "--seed", "10",
                     "--out", str(human)]) == 0
        fixtures = tmp_path / "fixtures"
        common = ["run", "--experiment", "e2", "--human", str(human), "--backend", "http",
                  "--fixtures", str(fixtures), "--model-name", "fake-lm", "--seed", "3",
                  "--permutations", "10000"]
        with FakeServer() as server:
            assert main(common + ["--endpoint", server.url, "--max-inflight", "4",
                                  "--out", str(tmp_path / "live")]) == 0
            assert server.requests == 18 * 11
        live = hashlib.sha256((tmp_path / "live" / "results.csv").read_bytes()).hexdigest()
        assert main(common + ["--offline", "--out", str(tmp_path / "replay")]) == 0
        replay = hashlib.sha256((tmp_path / "replay" / "results.csv").read_bytes()).hexdigest()
        assert replay == live
