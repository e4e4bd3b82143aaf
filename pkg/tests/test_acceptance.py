"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records a ``criterion N: PASS|FAIL ...`` line that is printed in
the terminal summary. Criteria 7 and 8 need MovieLens-100k and the tag
genome (see scripts/fetch_ml100k.py) and are skipped without them; the PMD
pair cache lives next to the data unless PREFMOVER_PAIR_CACHE points
elsewhere.
"""

import os
import tempfile
import time

import numpy as np
import pytest

from prefmover.core import Preference, item_metric_from_similarity
from prefmover.datasets import build_item_metric, load_tag_genome, parse_ml100k, read_triangle
from prefmover.errors import CacheInvalid
from prefmover.evaluation import FRACTIONS, SplitSpec, run_sweep, split
from prefmover.measures import bcf_family_sim, lookup
from prefmover.measures.pmd import PMDScorer
from prefmover.transport import TransportProblem, solve_entropic, solve_exact, solve_oracle

from conftest import ACCEPTANCE, ml100k_dir

RUNTIME_TARGET_S = 3600.0


def record(n, ok, detail):
    ACCEPTANCE.append(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    print(ACCEPTANCE[-1])
    assert ok, detail


def value(name, a, b, ratings, metric=None):
    u, v = ratings.user_index(a), ratings.user_index(b)
    return lookup(name)(u, v, ratings, metric)


def random_problem(rng, max_side):
    m, n = rng.integers(1, max_side + 1, 2)
    a, b = rng.random(m) + 1e-3, rng.random(n) + 1e-3
    return TransportProblem(a / a.sum(), b / b.sum(), rng.random((m, n)))


# --- case study ---------------------------------------------------------------

def test_criterion_1_classic_golden(toy):
    r, _ = toy
    t0 = time.perf_counter()
    bad = []

    def expect(name, a, b, want):
        res = value(name, a, b, r)
        got = res.as_similarity() if res.kind == "distance" else res.value
        if want is None:
            if res.computable:
                bad.append(f"{name}({a},{b}) should be uncomputable")
        elif not res.computable or abs(got - want) > 1e-9:
            bad.append(f"{name}({a},{b}) = {got}, want {want}")

    for a, b in (("u1", "u2"), ("u2", "u3")):
        for name, want in (("cos", 1), ("pcc", 1), ("msd", 1), ("jaccard", 0.5), ("urp", 0.5),
                           ("jmsd", 0.5)):
            expect(name, a, b, want)
    expect("jaccard", "u4", "u5", 0.0)
    for a, b in (("u4", "u5"), ("u5", "u6")):
        expect("urp", a, b, 0.5)
        for name in ("cos", "pcc", "msd", "jmsd", "nhsm"):
            expect(name, a, b, None)
    elapsed = time.perf_counter() - t0
    if elapsed >= 1.0:
        bad.append(f"runtime {elapsed:.2f}s")
    record(1, not bad, "; ".join(bad) or f"all classic golden values within 1e-9 "
                                           f"({elapsed * 1000:.0f} ms)")


def test_criterion_2_pmd_golden(toy, toy_metric):
    r, _ = toy
    m = toy_metric["one-minus"]
    s45 = 1 - value("pmd", "u4", "u5", r, m).value
    s56 = 1 - value("pmd", "u5", "u6", r, m).value
    record(2, abs(s45 - 0.3) <= 1e-9 and abs(s56 - 0.8) <= 1e-9,
           f"1-PMD(u4,u5) = {s45:.12f}, 1-PMD(u5,u6) = {s56:.12f}")


def test_criterion_3_pmd_orderings(toy, toy_metric):
    r, _ = toy
    parts, ok = [], True
    for mode in ("arccos", "one-minus"):
        m = toy_metric[mode]
        d = {p: value("pmd", *p, r, m).value
             for p in (("u1", "u2"), ("u2", "u3"), ("u4", "u5"), ("u5", "u6"))}
        good = d[("u1", "u2")] < d[("u2", "u3")] and d[("u4", "u5")] > d[("u5", "u6")]
        ok &= good
        parts.append(f"{mode}: {d[('u1', 'u2')]:.4f} < {d[('u2', 'u3')]:.4f}, "
                     f"{d[('u4', 'u5')]:.4f} > {d[('u5', 'u6')]:.4f}")
    record(3, ok, "; ".join(parts))


def test_criterion_4_bcf(toy):
    r, sim = toy
    idx = r.user_index
    n45 = bcf_family_sim(idx("u4"), idx("u5"), r, sim, normalized=True).value
    n56 = bcf_family_sim(idx("u5"), idx("u6"), r, sim, normalized=True).value
    b45 = bcf_family_sim(idx("u4"), idx("u5"), r, sim).value
    b56 = bcf_family_sim(idx("u5"), idx("u6"), r, sim).value
    ok = abs(n45 - 0.3) <= 1e-9 and abs(n56 - 0.8) <= 1e-9 and b45 > b56
    record(4, ok, f"N-BCF {n45:.12f} / {n56:.12f}, BCF {b45:.4f} > {b56:.4f}")


# --- solvers and metric -------------------------------------------------------

def test_criterion_5_exact_vs_oracle():
    rng = np.random.default_rng(20240501)
    problems = [random_problem(rng, 6) for _ in range(200)]
    t0 = time.perf_counter()
    cost_gap = marg = 0.0
    for p in problems:
        sol = solve_exact(p)
        cost_gap = max(cost_gap, abs(sol.optimal_cost - solve_oracle(p).optimal_cost))
        marg = max(marg, sol.coupling.marginal_error(p.supply, p.demand))
    elapsed = time.perf_counter() - t0
    record(5, cost_gap <= 1e-7 and marg <= 1e-9 and elapsed < 10.0,
           f"max cost gap {cost_gap:.2e}, max marginal error {marg:.2e}, {elapsed:.2f}s")


def test_criterion_6_metric_axioms():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(20, 8))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    sim = np.clip(x @ x.T, -1, 1)
    np.fill_diagonal(sim, 1.0)
    metric = item_metric_from_similarity(sim, "arccos")
    assert metric.is_metric

    def pref():
        support = np.sort(rng.choice(20, rng.integers(1, 9), replace=False))
        w = rng.integers(1, 6, len(support)).astype(float)
        return Preference(support, w / w.sum())

    def d(p, q):
        return solve_exact(TransportProblem.between(p, q, metric)).optimal_cost

    sym = self_d = 0.0
    slack = np.inf
    for _ in range(1000):
        p, q, s = pref(), pref(), pref()
        pq, qp, qs, ps = d(p, q), d(q, p), d(q, s), d(p, s)
        sym = max(sym, abs(pq - qp))
        self_d = max(self_d, abs(d(p, p)))
        slack = min(slack, pq + qs - ps)
    record(6, sym <= 1e-9 and self_d <= 1e-9 and slack >= -1e-9,
           f"symmetry {sym:.1e}, self-distance {self_d:.1e}, min triangle slack {slack:.3g}")


def test_criterion_9_entropic():
    rng = np.random.default_rng(9)
    worst = 0.0
    monotone = 0
    for _ in range(50):
        a, b = rng.random(10) + 1e-3, rng.random(10) + 1e-3
        p = TransportProblem(a / a.sum(), b / b.sum(), rng.random((10, 10)))
        exact = solve_exact(p).optimal_cost
        gaps = [solve_entropic(p, eps).optimal_cost - exact for eps in (1e-1, 1e-2, 1e-3)]
        worst = max(worst, gaps[-1])
        monotone += gaps[0] > gaps[1] > gaps[2]
    record(9, worst <= 1e-2 and monotone >= 45,
           f"max gap at eps=1e-3 {worst:.2e}, monotone on {monotone}/50")


def test_criterion_10_cache_integrity(tmp_path):
    rng = np.random.default_rng(10)
    vectors = rng.random((400, 32))
    vectors[rng.random(vectors.shape) < 0.5] = 0.0
    path = str(tmp_path / "items.pmdc")
    built = build_item_metric(vectors, "arccos", cache_path=path)
    again = build_item_metric(vectors, "arccos", cache_path=path)
    i, j = rng.integers(0, 400, (2, 1000))
    norms = np.linalg.norm(vectors, axis=1)
    exact = np.arccos(np.clip((vectors[i] * vectors[j]).sum(1) / (norms[i] * norms[j]), -1, 1))
    exact[i == j] = 0.0
    round_trip = float(np.abs(again.paired(i, j) - exact).max())
    same = np.array_equal(again.dense(), built.dense())
    with open(path, "r+b") as fh:
        fh.seek(4)
        fh.write(b"\xff\xff\xff\xff")
    try:
        read_triangle(path, b"PMDC", 1, 0, 400, np.float32)
        raised = False
    except CacheInvalid:
        raised = True
    rebuilt = build_item_metric(vectors, "arccos", cache_path=path)
    ok_rebuild = np.array_equal(rebuilt.dense(), built.dense())
    read_triangle(path, b"PMDC", 1, 0, 400, np.float32)  # rewritten and valid again
    record(10, round_trip <= 1e-6 and same and raised and ok_rebuild,
           f"round-trip error {round_trip:.1e}, corrupted header raised CacheInvalid: "
           f"{raised}, rebuilt: {ok_rebuild}")


# --- MovieLens-100k -----------------------------------------------------------

@pytest.fixture(scope="module")
def ml100k():
    d = ml100k_dir()
    if d is None:
        pytest.skip("MovieLens-100k with tag genome not found (scripts/fetch_ml100k.py)")
    ratings = parse_ml100k(os.path.join(d, "u.data"))
    vectors, missing = load_tag_genome(os.path.join(d, "genome-scores.csv"),
                                       ratings.item_labels)
    item_cache = os.path.join(d, "items-arccos.pmdc")
    if not os.access(d, os.W_OK):
        item_cache = os.path.join(tempfile.mkdtemp(), "items-arccos.pmdc")
    metric = build_item_metric(vectors, "arccos", missing, item_cache)
    cache_dir = os.environ.get("PREFMOVER_PAIR_CACHE") or os.path.join(d, "pair-cache")
    jobs = os.cpu_count() or 1
    spec = SplitSpec(0.8, 5, 0)
    t0 = time.perf_counter()
    report = run_sweep(ratings, metric, ["pmd", "cos", "user-mean"], FRACTIONS, [5, 40], spec,
                       jobs=jobs,
                       cache_dir=cache_dir)
    wall = time.perf_counter() - t0
    return ratings, metric, spec, report, wall, jobs


def _solve_seconds(ratings, metric, spec, fraction, samples=200):
    """Mean time of one exact solve on pairs of the first split at ``fraction``."""
    train, _ = split(ratings, SplitSpec(fraction, spec.repetitions, spec.seed), 0)
    scorer = PMDScorer(train, metric)
    users = [u for u in range(train.num_users) if scorer.has_preference(u)]
    rng = np.random.default_rng(0)
    pairs = rng.choice(users, (samples, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    t0 = time.perf_counter()
    for u, v in pairs:
        scorer._solve(int(min(u, v)), int(max(u, v)))
    return (time.perf_counter() - t0) / len(pairs)


def test_criterion_7_trend(ml100k):
    _, _, _, report, _, _ = ml100k
    assert not report.failures
    pmd, cos = report.mean("pmd", 0.1, 40), report.mean("cos", 0.1, 40)
    cov = {f: (report.mean("pmd", f, 40, "coverage"), report.mean("cos", f, 40, "coverage"))
           for f in FRACTIONS}
    cov_ok = all(p >= c for p, c in cov.values())
    cov_text = ", ".join(f"{f:g}: {p:.3f}/{c:.3f}" for f, (p, c) in cov.items())
    record(7, pmd < cos and cov_ok,
           f"MAE@40 at 1:9 PMD {pmd:.4f} vs COS {cos:.4f}; coverage PMD/COS {cov_text}")


def test_criterion_7_runtime(ml100k):
    """Cold-cache wall time at default parallelism, measured or extrapolated.

    Pairs already in the cache are charged at the mean solve time sampled on
    the same fraction, divided by the worker count.
    """
    ratings, metric, spec, report, wall, jobs = ml100k
    per_solve = {f: _solve_seconds(ratings, metric, spec, f) for f in FRACTIONS}
    cached = {f: 0 for f in FRACTIONS}
    for s in report.pmd_pairs:
        cached[s["fraction"]] += max(s["pairs"] - s["solved"], 0)
    extra = sum(cached[f] * per_solve[f] for f in FRACTIONS) / jobs
    total = wall + extra
    detail = (f"cold run {total / 60:.1f} min at jobs={jobs} (measured {wall / 60:.1f} min, "
              f"{sum(cached.values())} cached pairs charged at "
              + ", ".join(f"{f:g}: {per_solve[f] * 1000:.2f} ms" for f in FRACTIONS)
              + f"); target {RUNTIME_TARGET_S / 60:.0f} min")
    ACCEPTANCE.append(f"criterion 7.runtime: {'PASS' if total <= RUNTIME_TARGET_S else 'FAIL'} "
                      + detail)
    print(ACCEPTANCE[-1])
    assert total <= RUNTIME_TARGET_S, detail


def test_criterion_8_k_sweep(ml100k):
    _, _, _, report, _, _ = ml100k
    k5, k40 = report.mean("pmd", 0.8, 5), report.mean("pmd", 0.8, 40)
    record(8, k40 <= k5, f"PMD MAE at 4:1, K=5 {k5:.4f}, K=40 {k40:.4f}")


def test_measures_beat_user_mean(ml100k):
    _, _, _, report, _, _ = ml100k
    base = report.mean("user-mean", 0.8, 40)
    for m in ("pmd", "cos"):
        assert report.mean(m, 0.8, 40) < base, m
