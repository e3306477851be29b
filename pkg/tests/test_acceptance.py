"""Acceptance gate: one test per criterion, each at its stated tolerance.

Every test records a short detail string; the terminal summary prints one
PASS/FAIL line per criterion.
"""

import json
import time

import numpy as np
import pytest
from test_predict import brute_force_split
from test_stats import enumerate_p, spherical_data, two_way_oracle
from test_xmodal import DIMS, quadratic_attention, random_inputs

from perceived_personality.analysis import cluster_analysis
from perceived_personality.cli.main import main
from perceived_personality.core import TraitVector
from perceived_personality.io import minmax_rescale
from perceived_personality.predict import GbtConfig, best_split, compare_predictors, fit_gbt
from perceived_personality.stats import (
    holm_adjust,
    icc2k,
    mauchly_gg,
    paired_t,
    permanova,
    pseudo_f,
    rm_anova,
    tost_equivalence,
    two_way_mean_squares,
)
from perceived_personality.synth import SynthConfig, gen_self_reports, gen_sessions
from perceived_personality.xmodal import HyperConfig, forward_scores, grad_check, init_params, linear_attention, train


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


@pytest.mark.criterion(1)
def test_c01_permanova_exactness(record_property):
    start = time.perf_counter()
    worst_mc = 0.0
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        pts = rng.integers(0, 6, size=(7, 3))
        labels = [0, 0, 0, 1, 1, 1, 1]
        exact = permanova(pts, labels, mode="auto")
        assert exact.exact
        assert exact.p_value == enumerate_p(pts, labels)
        mc = permanova(pts, labels, n_permutations=10_000, seed=seed, mode="monte_carlo")
        worst_mc = max(worst_mc, abs(mc.p_value - exact.p_value))
    elapsed = time.perf_counter() - start
    record_property("detail", f"exact == enumeration on 5 sets; max |MC - exact| = {worst_mc:.4f}; {elapsed:.2f} s")
    assert worst_mc <= 0.02
    assert elapsed < 5.0


def _rejection_rate(sigma_between, sigma_within, replicates, offset):
    rejected = 0
    for r in range(replicates):
        cfg = SynthConfig(sigma_between=sigma_between, sigma_within=sigma_within, with_performance=False, seed=offset + r)
        results, _ = cluster_analysis(gen_sessions(cfg), n_permutations=999, seed=r)
        rejected += results[0]["permanova"]["p_value"] <= 0.05
    return rejected / replicates


@pytest.mark.slow
@pytest.mark.criterion(2)
def test_c02_permanova_calibration(record_property):
    start = time.perf_counter()
    null = _rejection_rate(0.0, 0.05, 500, 10_000)
    strong = _rejection_rate(0.25, 0.05, 200, 20_000)
    elapsed = time.perf_counter() - start
    record_property("detail", f"null rejection {null:.3f}; strong rejection {strong:.3f}; {elapsed:.0f} s")
    assert 0.03 <= null <= 0.07
    assert strong >= 0.95
    assert elapsed < 300


@pytest.mark.criterion(3)
def test_c03_pseudo_f_invariances(record_property):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n, d, a = int(rng.integers(6, 30)), int(rng.integers(1, 6)), int(rng.integers(2, 5))
        labels = np.concatenate([np.arange(a), rng.integers(0, a, n - a)])
        pts = rng.normal(size=(n, d))
        base = pseudo_f(pts, labels).f
        moved = pseudo_f(pts + rng.normal(0, 10, d), labels).f
        scaled = pseudo_f(pts * rng.uniform(0.01, 100), labels).f
        worst = max(worst, rel(moved, base), rel(scaled, base))
    record_property("detail", f"max relative error {worst:.2e} over 100 instances")
    assert worst <= 1e-9


@pytest.mark.criterion(4)
def test_c04_icc_oracle(record_property):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        m = rng.normal(size=(6, 4))
        for got, want in zip(two_way_mean_squares(m), two_way_oracle(m)):
            worst = max(worst, rel(got, want))
    noise_free = [icc2k(np.repeat(rng.normal(size=(6, 1)), 4, axis=1)).icc for _ in range(10)]
    record_property("detail", f"max MS relative error {worst:.2e}; noise-free ICC {min(noise_free)!r}..{max(noise_free)!r}")
    assert worst <= 1e-10
    assert all(v == 1.0 for v in noise_free)


@pytest.mark.criterion(5)
def test_c05_rm_anova_consistency(record_property):
    rng = np.random.default_rng(5)
    worst_f = 0.0
    for _ in range(50):
        m = rng.normal(size=(int(rng.integers(3, 20)), 2)) + rng.normal(0, 0.5, 2)
        worst_f = max(worst_f, rel(rm_anova(m).f, paired_t(m[:, 0], m[:, 1]).t ** 2))
    eps = []
    for _ in range(100):
        k = int(rng.integers(3, 7))
        m = rng.normal(size=(k + int(rng.integers(1, 10)), k)) * rng.uniform(0.1, 3, k)
        eps.append((k, mauchly_gg(m).gg_epsilon))
    in_bounds = all(1 / (k - 1) - 1e-12 <= e <= 1.0 for k, e in eps)
    spherical = [mauchly_gg(spherical_data(12, k, np.random.default_rng(50 + k))).gg_epsilon for k in (3, 4, 5, 6)]
    worst_sph = max(abs(e - 1.0) for e in spherical)
    record_property(
        "detail", f"max |F - t^2| rel {worst_f:.2e}; eps in bounds: {in_bounds}; spherical |eps - 1| {worst_sph:.1e}"
    )
    assert worst_f <= 1e-9 and in_bounds and worst_sph <= 1e-6


def holm_oracle(p):
    """Step-down by explicit loop over the sorted p-values."""
    m = len(p)
    order = sorted(range(m), key=lambda i: (p[i], i))
    out = [0.0] * m
    running = 0.0
    for rank, i in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p[i]))
        out[i] = running
    return out


@pytest.mark.criterion(6)
def test_c06_holm(record_property):
    worked = holm_adjust([0.01, 0.04, 0.03])
    assert np.allclose(worked, [0.03, 0.06, 0.06], rtol=0, atol=1e-15)
    rng = np.random.default_rng(6)
    for _ in range(1000):
        m = int(rng.integers(1, 25))
        p = rng.uniform(size=m) ** rng.uniform(0.2, 5)
        if rng.random() < 0.2:
            p[rng.integers(0, m)] = p[0]
        adj = np.array(holm_adjust(list(p)))
        order = np.argsort(p, kind="stable")
        assert np.all(np.diff(adj[order]) >= 0)
        assert np.all(adj >= p) and np.all(adj <= np.minimum(1.0, m * p) + 1e-15)
        np.testing.assert_allclose(adj, holm_oracle(list(p)), rtol=1e-14, atol=0)
    record_property("detail", f"worked example {worked}; 1000 fuzz cases hold")


@pytest.mark.criterion(7)
def test_c07_linear_attention(record_property):
    rng = np.random.default_rng(7)
    worst = 0.0
    for d in (8, 32):
        for T in range(1, 65):
            Q, K, V = rng.normal(size=(T, d)), rng.normal(size=(T, d)), rng.normal(size=(T, d))
            want = quadratic_attention(Q, K, V)
            worst = max(worst, np.abs(linear_attention(Q, K, V) - want).max() / np.abs(want).max())
    Q, K, V = rng.normal(size=(5, 8)), rng.normal(size=(1, 8)), rng.normal(size=(1, 8))
    single = np.abs(linear_attention(Q, K, V) - V).max()
    K = np.repeat(rng.normal(size=(1, 8)), 6, axis=0)
    V = rng.normal(size=(6, 8))
    same = np.abs(linear_attention(Q, K, V) - V.mean(axis=0)).max()
    record_property("detail", f"max streaming rel error {worst:.1e}; single key {single:.1e}; identical keys {same:.1e}")
    assert worst < 1e-10 and single <= 1e-5 and same <= 1e-5


def toy_dataset(n, seed):
    rng = np.random.default_rng(seed)
    return [(tuple(random_inputs(rng, rng.integers(2, 6, size=3))), rng.uniform(0.05, 0.95, 5)) for _ in range(n)]


@pytest.mark.criterion(8)
def test_c08_gradient_check(record_property):
    start = time.perf_counter()
    params = init_params(DIMS, HyperConfig(d=8, heads=2, seed=8))
    res = grad_check(params, toy_dataset(3, 8), n_coords=200)
    elapsed = time.perf_counter() - start
    record_property("detail", f"max relative error {res.max_relative_error:.1e} on {len(res.coordinates)} coordinates; {elapsed:.1f} s")
    assert len(res.coordinates) == 200
    assert res.max_relative_error < 1e-4 and elapsed < 60


@pytest.mark.criterion(9)
def test_c09_inventory_and_range(record_property):
    params = init_params(DIMS, HyperConfig(d=8, heads=2, seed=9))
    census = {name.split(".")[1] for name in params.tensors if name.startswith("cross.")}
    rng = np.random.default_rng(9)
    lo, hi = 1.0, 0.0
    for i in range(1000):
        if i % 250 == 0:
            params_i = init_params(DIMS, HyperConfig(d=8, heads=2, seed=i))
        lengths = rng.integers(1, 12, size=3)
        scale = 10 ** rng.uniform(-2, 1.5)
        s = forward_scores(*random_inputs(rng, lengths, scale), params_i)
        assert s.shape == (5,)
        lo, hi = min(lo, s.min()), max(hi, s.max())
    record_property("detail", f"{len(census)} cross-modal blocks; outputs in [{lo:.3g}, {hi:.3g}]")
    assert census == {f"{s}->{t}" for s in DIMS for t in DIMS if s != t}
    assert 0.0 < lo and hi < 1.0


@pytest.mark.criterion(10)
def test_c10_training_sanity(record_property):
    data = toy_dataset(8, 10)
    hyper = HyperConfig(d=8, heads=2, epochs=200, seed=10)
    a = train(data, hyper)
    b = train(data, hyper)
    curve = a.loss_curve
    first = next((i for i, v in enumerate(curve) if v < 0.01), None)
    identical = curve == b.loss_curve and all(a.tensors[k].tobytes() == b.tensors[k].tobytes() for k in a.tensors)
    record_property("detail", f"initial MSE {curve[0]:.3f}; < 0.01 after {first} epochs; final {curve[-1]:.1e}; rerun identical: {identical}")
    assert first is not None and first <= 200
    assert identical


def _self_report_vectors(table, seed):
    raw = gen_self_reports(table, seed=seed)
    pids = sorted(raw)
    scaled = minmax_rescale(np.array([raw[p] for p in pids]))
    return {p: TraitVector.from_array(v) for p, v in zip(pids, scaled)}


@pytest.mark.slow
@pytest.mark.criterion(11)
def test_c11_gbt(record_property):
    rng = np.random.default_rng(11)
    for _ in range(50):
        X, y = rng.normal(size=(20, 4)), rng.normal(size=20)
        mse = fit_gbt(X, y, GbtConfig(n_trees=40, max_depth=int(rng.integers(1, 4)))).train_mse
        assert np.all(np.diff(mse) <= 0.0)
    for _ in range(30):
        X, r = np.round(rng.uniform(size=(15, 3)), 1), rng.normal(size=15)
        gain, feat, thr = best_split(X, r)
        bgain, bfeat, bthr = brute_force_split(X, r)
        assert (feat, thr) == (bfeat, pytest.approx(bthr, abs=1e-15)) and gain == pytest.approx(bgain, rel=1e-10)
    wins = 0
    for seed in range(100):
        table = gen_sessions(SynthConfig(seed=seed))
        reports = compare_predictors(table, _self_report_vectors(table, seed))
        wins += all(
            reports[("perceived", rep)].mse_mean < reports[("self_report", rep)].mse_mean for rep in ("big5", "meta")
        )
    record_property("detail", f"MSE nonincreasing; split oracle agrees; perceived better in {wins}/100 replicates")
    assert wins >= 95


@pytest.mark.criterion(12)
def test_c12_pipeline_determinism(tmp_path, record_property):
    checksums = []
    for run in ("first", "second"):
        d = tmp_path / run
        d.mkdir()
        steps = [
            ["synth", "--out", d / "traits.csv", "--performance-out", d / "perf.csv", "--self-report-out", d / "self.csv",
             "--tasks", "A,B,C", "--sigma-task", "0.05", "--missing-fraction", "0.1", "--seed", "12"],
            ["cluster", d / "traits.csv", "--permutations", "999", "--seed", "3", "--out", d / "cluster.json"],
            ["tasks", d / "traits.csv", "--posthoc", "paired", "--out", d / "tasks.json"],
            ["predict", d / "traits.csv", d / "perf.csv", "--self-report-csv", d / "self.csv", "--rescale-self-reports",
             "--out", d / "predict.json"],
        ]
        for argv in steps:
            assert main([str(a) for a in argv]) == 0
        sums = {"traits.csv": (d / "traits.csv").read_bytes()}
        for name in ("cluster", "tasks", "predict"):
            report = json.loads((d / f"{name}.json").read_text())
            report["manifest"].pop("timestamp")
            sums[name] = (report["checksum"], report["manifest"])
        checksums.append(sums)
    same = checksums[0] == checksums[1]
    record_property("detail", f"rerun checksums and manifests identical: {same}")
    assert same


@pytest.mark.criterion(13)
def test_c13_tost(record_property):
    rng = np.random.default_rng(13)
    bound = 0.1
    p_boundary = []
    for paired in (True, False):
        rater = rng.uniform(0, 0.4, 200)
        noise = rng.normal(0, 0.05, 200)
        model = rater + bound + (noise - noise.mean())
        res = tost_equivalence(model, rater, bound=bound, paired=paired)
        p_boundary.append(res.p_upper)
    identical = []
    for n in (10, 11, 25, 100):
        err = np.abs(rng.normal(0, 0.2, n))
        # Default paired mode; Welch mode with identical samples depends on the spread.
        identical.append(tost_equivalence(err, err.copy(), bound=bound).equivalent)
    record_property("detail", f"boundary upper p = {', '.join(f'{p:.4f}' for p in p_boundary)}; identical equivalent: {all(identical)}")
    assert all(abs(p - 0.5) <= 0.02 for p in p_boundary)
    assert all(identical)
