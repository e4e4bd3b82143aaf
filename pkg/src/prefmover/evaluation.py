"""Cross-validation sweeps over train fractions and neighborhood sizes.

For every split the test ratings are grouped by user. Each user's scores
against everyone are computed once per measure, the K_max best raters of
each test item are ranked, and every requested K reads a prefix of that
ranking. PMD pairs are cached on disk per split so reruns and K sweeps
reuse them.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import TIE_DECIMALS, ItemMetric, SparseRatings
from .datasets import MODES, read_triangle, write_triangle
from .errors import CacheInvalid, ConfigError, EmptyTestSet
from .measures.bcf import AGREEMENT, HUSM, BCFRows
from .measures.catalog import NAMES
from .measures.classic import UserStats, classic_rows
from .measures.pmd import PMDScorer

log = logging.getLogger(__name__)

BASELINE = "user-mean"
PAIR_CACHE_MAGIC = b"PMDP"
PAIR_CACHE_VERSION = 1
CLASSIC = ("cos", "pcc", "msd", "jaccard", "urp", "jmsd", "nhsm")
NEEDS_METRIC = ("bcf", "n-bcf", "husm", "n-husm", "pmd")
FRACTIONS = (0.8, 0.6, 0.4, 0.2, 0.1)
KS_100K = tuple(range(5, 61, 5))
KS_1M = tuple(range(4, 61, 4))
SAVE_EVERY_S = 120.0


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    repetitions: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if self.repetitions < 1:
            raise ValueError("need at least one repetition")


def split(ratings: SparseRatings, spec: SplitSpec, repetition: int):
    """Uniform split of the rating entries, seeded by ``(seed, repetition)``.

    The entry permutation does not depend on the fraction, so for one
    repetition the train set of a smaller fraction is contained in that of a
    larger one. Returns ``(train, test)`` with ``test`` a list of
    ``(user, item, rating)`` sorted by user then item.
    """
    users, items, values = ratings.entries()
    n = len(values)
    n_test = int(math.floor((1.0 - spec.train_fraction) * n + 1e-9))
    perm = np.random.default_rng([spec.seed, repetition]).permutation(n)
    mask = np.zeros(n, bool)
    mask[perm[:n - n_test]] = True
    test = np.nonzero(~mask)[0]
    test = test[np.lexsort((items[test], users[test]))]
    return (ratings.subset(mask),
            [(int(users[k]), int(items[k]), float(values[k])) for k in test])


def mae(predictions, truth) -> float:
    """Mean absolute error over all predictions (fallbacks included)."""
    p = np.array([getattr(x, "value", x) for x in predictions], dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if len(p) != len(t):
        raise ValueError("predictions and truth differ in length")
    if len(p) == 0:
        raise EmptyTestSet("cannot compute MAE of an empty test set")
    return float(np.mean(np.abs(p - t)))


@dataclass(frozen=True)
class ReportRow:
    measure: str
    fraction: float
    k: int
    rep: int
    mae: float
    coverage: float
    wall_time_s: float


COLUMNS = ("measure", "fraction", "k", "rep", "mae", "coverage", "wall_time_s")


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    pmd_pairs: list = field(default_factory=list)

    def mean(self, measure, fraction, k, column="mae") -> float:
        vals = [getattr(r, column) for r in self.rows
                if r.measure == measure and r.fraction == fraction and r.k == k]
        return float(np.mean(vals)) if vals else math.nan

    def measures(self):
        return list(dict.fromkeys(r.measure for r in self.rows))

    def fractions(self):
        return sorted({r.fraction for r in self.rows}, reverse=True)

    def ks(self):
        return sorted({r.k for r in self.rows})

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for r in self.rows:
                w.writerow([r.measure, f"{r.fraction:g}", r.k, r.rep, f"{r.mae:.10f}",
                            f"{r.coverage:.10f}", f"{r.wall_time_s:.3f}"])

    def write_json(self, path):
        nested = {}
        for r in self.rows:
            cell = nested.setdefault(r.measure, {}).setdefault(f"{r.fraction:g}", {})
            cell.setdefault(str(r.k), []).append(
                {"rep": r.rep, "mae": r.mae, "coverage": r.coverage,
                 "wall_time_s": r.wall_time_s})
        with open(path, "w") as fh:
            json.dump({"config": self.config, "results": nested, "failures": self.failures,
                       "pmd_pairs": self.pmd_pairs}, fh, indent=2)

    def _wide(self, path, axis, values, fixed):
        measures = self.measures()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([axis] + measures)
            for x in values:
                key = (x, fixed) if axis == "fraction" else (fixed, x)
                w.writerow([f"{x:g}"] + [f"{self.mean(m, *key):.10f}" for m in measures])

    def write_plot_csvs(self, out_dir, k_fixed=40, fraction_fixed=0.8):
        """Mean MAE over repetitions, one column per measure.

        ``fig-sparsity.csv`` runs over fractions at ``k_fixed`` (or the only
        K), ``fig-ksweep.csv`` over K at ``fraction_fixed`` (or the only one).
        """
        ks, fracs = self.ks(), self.fractions()
        k = k_fixed if k_fixed in ks else ks[0]
        f = fraction_fixed if fraction_fixed in fracs else fracs[0]
        self._wide(os.path.join(out_dir, "fig-sparsity.csv"), "fraction", fracs, k)
        self._wide(os.path.join(out_dir, "fig-ksweep.csv"), "k", ks, f)

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        self.write_csv(os.path.join(out_dir, "report.csv"))
        self.write_json(os.path.join(out_dir, "report.json"))
        self.write_plot_csvs(out_dir)

    def summary(self) -> str:
        lines = [f"{'measure':<10} {'fraction':>8} {'k':>4} {'mae':>8} {'coverage':>9} {'reps':>4}"]
        for m in self.measures():
            for f in self.fractions():
                for k in self.ks():
                    n = sum(1 for r in self.rows if (r.measure, r.fraction, r.k) == (m, f, k))
                    if n:
                        lines.append(f"{m:<10} {f:>8g} {k:>4} {self.mean(m, f, k):>8.4f} "
                                     f"{self.mean(m, f, k, 'coverage'):>9.4f} {n:>4}")
        return "\n".join(lines)


# --- pair cache ---------------------------------------------------------------

def metric_fingerprint(metric: ItemMetric) -> str:
    h = hashlib.sha1()
    h.update(f"{metric.mode}|{metric.d_max!r}|{metric.n_items}".encode())
    h.update(np.ascontiguousarray(metric.dense()).tobytes())
    return h.hexdigest()


def split_fingerprint(train: SparseRatings, metric_key: str, truncate, solver) -> str:
    h = hashlib.sha1()
    h.update(f"{metric_key}|{truncate}|{solver}|{train.num_users}|{train.num_items}".encode())
    for a in (train.csr.indptr, train.csr.indices, train.csr.data):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:20]


class PairCache:
    """PMD pair table for one split; unknown entries are NaN."""

    def __init__(self, path, n_users, mode):
        self.path = path
        self.n = n_users
        self.mode = MODES.get(mode, 255)

    def load(self) -> Optional[np.ndarray]:
        if not os.path.exists(self.path):
            return None
        try:
            table = read_triangle(self.path, PAIR_CACHE_MAGIC, PAIR_CACHE_VERSION, self.mode,
                                  self.n, np.float64)
        except CacheInvalid as exc:
            log.warning("ignoring pair cache: %s", exc)
            return None
        np.fill_diagonal(table, 0.0)
        return table

    def save(self, table):
        write_triangle(self.path, PAIR_CACHE_MAGIC, PAIR_CACHE_VERSION, self.mode, table,
                       np.float64)


# --- per-user scoring ---------------------------------------------------------

class _Split:
    """Everything a worker needs to score test users of one split."""

    def __init__(self, train, metric, measures, ks, solver, epsilon, truncate, table):
        self.train = train
        self.ks = np.asarray(sorted(ks), np.int64)
        self.k_max = int(self.ks[-1])
        self.means = np.nan_to_num(train.user_means)
        self.counts = train.user_counts
        self.global_mean = train.global_mean()
        csc = train.csc
        self.indptr, self.raters = csc.indptr, csc.indices
        self.dev = csc.data - self.means[csc.indices]
        self.scale = train.scale
        self.stats = UserStats(train) if any(m in CLASSIC for m in measures) else None
        self.bcf = BCFRows(train, metric, AGREEMENT) if {"bcf", "n-bcf"} & set(measures) else None
        self.husm = BCFRows(train, metric, HUSM) if {"husm", "n-husm"} & set(measures) else None
        self.pmd = (PMDScorer(train, metric, solver=solver, epsilon=epsilon, truncate=truncate,
                              table=table) if "pmd" in measures else None)
        self._row_user = -1
        self._rows = {}

    def weight_row(self, measure, u):
        if self._row_user != u:
            self._rows = {}
            self._row_user = u
        if measure not in self._rows:
            if measure in CLASSIC:
                vals, ok = classic_rows(self.stats, u)[measure]
                w = 1.0 - vals if measure == "msd" else vals
            else:
                rows = (self.bcf if measure in ("bcf", "n-bcf") else self.husm).rows(u)
                vals, ok = rows["normalized" if measure.startswith("n-") else "raw"]
                w = vals
            self._rows[measure] = np.where(ok, np.maximum(np.nan_to_num(w), 0.0), 0.0)
        return self._rows[measure]

    def neighbors(self, measure, u, item):
        lo, hi = self.indptr[item], self.indptr[item + 1]
        cands, dev = self.raters[lo:hi], self.dev[lo:hi]
        if measure == "pmd":
            users, d = self.pmd.top_k(u, cands, self.k_max)
            return 1.0 - d / self.pmd.d_max, dev[np.searchsorted(cands, users)]
        w = self.weight_row(measure, u)[cands]
        keep = np.nonzero((w > 0) & (cands != u))[0]
        order = keep[np.lexsort((cands[keep], -np.round(w[keep], TIE_DECIMALS)))][:self.k_max]
        return w[order], dev[order]

    def score_user(self, measure, u, items):
        """Predictions ``(len(items), len(ks))`` and a no-fallback flag per item."""
        lo, hi = self.scale
        preds = np.empty((len(items), len(self.ks)))
        covered = np.zeros(len(items), bool)
        if self.counts[u] == 0:
            preds[:] = min(max(self.global_mean, lo), hi)
            return preds, covered
        mean_u = self.means[u]
        if measure == BASELINE or (measure == "pmd" and not self.pmd.has_preference(u)):
            preds[:] = min(max(mean_u, lo), hi)
            return preds, covered
        for t, item in enumerate(items):
            w, dev = self.neighbors(measure, u, item)
            if len(w) == 0:
                preds[t] = min(max(mean_u, lo), hi)
                continue
            covered[t] = True
            num = np.cumsum(w * dev)
            den = np.cumsum(np.abs(w))
            last = np.minimum(self.ks, len(w)) - 1
            preds[t] = np.clip(mean_u + num[last] / den[last], lo, hi)
        return preds, covered


_WORKER = {}


def _score_users(measure, users, bounds, items):
    """Score a block of test users; returns predictions, flags, time and new PMD pairs."""
    state: _Split = _WORKER["split"]
    child = measure == "pmd" and _WORKER.get("child")
    before = state.pmd.table.copy() if child else None
    used_before = state.pmd.used.copy() if child else None
    t0 = time.perf_counter()
    preds, covered = [], []
    for u, (a, b) in zip(users, bounds):
        p, c = state.score_user(measure, u, items[a:b])
        preds.append(p)
        covered.append(c)
    elapsed = time.perf_counter() - t0
    new_pairs = None
    if before is not None:
        fresh = np.nonzero(np.isnan(before) & ~np.isnan(state.pmd.table))
        used = np.nonzero(state.pmd.used & ~used_before)
        new_pairs = (fresh[0], fresh[1], state.pmd.table[fresh], used)
    return preds, covered, elapsed, new_pairs


def _child_init():
    _WORKER["child"] = True


def _chunks(seq, n):
    return [seq[k::n] for k in range(n)]


def run_sweep(ratings: SparseRatings, metric: Optional[ItemMetric], measures, fractions, ks,
              spec: SplitSpec = SplitSpec(), jobs: int = 1, solver="exact", epsilon=1e-3,
              truncate=None, cache_dir=None, progress: Optional[Callable] = None,
              config: Optional[dict] = None) -> EvalReport:
    """Full factorial over measure x fraction x K x repetition.

    ``user-mean`` may be listed like a measure; it predicts every test
    rating with the target's training mean. Failures of one
    (measure, fraction, repetition) group are logged and recorded in the
    report; the sweep carries on.
    """
    measures = list(dict.fromkeys(measures))
    unknown = [m for m in measures if m not in NAMES and m != BASELINE]
    if unknown:
        raise ConfigError(f"unknown measures: {', '.join(unknown)}")
    if not fractions or not ks:
        raise ConfigError("fractions and K values must be nonempty")
    if any(not 0 < f < 1 for f in fractions):
        raise ConfigError("fractions must lie strictly between 0 and 1")
    if any(int(k) < 1 for k in ks):
        raise ConfigError("K values must be positive")
    if metric is None and set(measures) & set(NEEDS_METRIC):
        raise ConfigError("measures " + ", ".join(sorted(set(measures) & set(NEEDS_METRIC)))
                          + " need an item metric (tag genome)")
    ks = sorted(int(k) for k in ks)
    say = progress or (lambda msg: None)
    report = EvalReport(config=dict(config or {}, measures=measures, fractions=list(fractions),
                                    ks=ks, repetitions=spec.repetitions, seed=spec.seed,
                                    solver=solver, truncate=truncate,
                                    approximate=bool(truncate) or solver != "exact"))
    metric_key = metric_fingerprint(metric) if "pmd" in measures else ""

    for rep in range(spec.repetitions):
        for fraction in fractions:
            train, test = split(ratings, SplitSpec(fraction, spec.repetitions, spec.seed), rep)
            if not test:
                report.failures.append({"fraction": fraction, "rep": rep,
                                        "error": "empty test set"})
                continue
            tu = np.array([t[0] for t in test], np.int64)
            ti = np.array([t[1] for t in test], np.int64)
            tr = np.array([t[2] for t in test])
            users, starts = np.unique(tu, return_index=True)
            ends = np.append(starts[1:], len(tu))
            bounds = list(zip(starts.tolist(), ends.tolist()))

            cache = table = None
            if "pmd" in measures and cache_dir:
                os.makedirs(cache_dir, exist_ok=True)
                key = split_fingerprint(train, metric_key, truncate, solver)
                cache = PairCache(os.path.join(cache_dir, f"pmd-{key}.pmdp"),
                                  train.num_users, metric.mode)
                table = cache.load()
            state = _Split(train, metric, measures, ks, solver, epsilon, truncate, table)

            for measure in measures:
                t0 = time.perf_counter()
                try:
                    preds, covered = _run_measure(state, measure, users, bounds, ti, jobs,
                                                  cache, say, fraction, rep)
                except Exception as exc:  # keep the sweep going
                    log.exception("measure %s failed at fraction %g rep %d", measure,
                                  fraction, rep)
                    report.failures.append({"measure": measure, "fraction": fraction,
                                            "rep": rep, "error": repr(exc)})
                    continue
                wall = time.perf_counter() - t0
                cov = float(covered.mean())
                for j, k in enumerate(ks):
                    report.rows.append(ReportRow(measure, fraction, k, rep,
                                                 float(np.mean(np.abs(preds[:, j] - tr))),
                                                 cov, wall))
                say(f"{measure} fraction={fraction:g} rep={rep}: "
                    f"MAE@K={ks[0]} {report.rows[-len(ks)].mae:.4f}, coverage {cov:.3f}, "
                    f"{wall:.1f}s")
            if state.pmd is not None:
                report.pmd_pairs.append({"fraction": fraction, "rep": rep,
                                         "pairs": state.pmd.pairs_used,
                                         "solved": state.pmd.solved})
            if cache is not None:
                cache.save(state.pmd.table)
    return report


def _run_measure(state, measure, users, bounds, items, jobs, cache, say, fraction, rep):
    _WORKER["split"] = state
    n = len(users)
    preds = [None] * n
    covered = [None] * n
    order = list(range(n))
    pmd = measure == "pmd"
    if jobs > 1 and n > 1:
        ctx = multiprocessing.get_context("fork")
        blocks = _chunks(order, jobs * 4)
        with ProcessPoolExecutor(jobs, mp_context=ctx, initializer=_child_init) as pool:
            futures = [(blk, pool.submit(_score_users, measure, users[blk],
                                         [bounds[b] for b in blk], items)) for blk in blocks if blk]
            for blk, fut in futures:
                p, c, _, fresh = fut.result()
                for b, pb, cb in zip(blk, p, c):
                    preds[b], covered[b] = pb, cb
                if fresh is not None:
                    state.pmd.table[fresh[0], fresh[1]] = fresh[2]
                    state.pmd.used[fresh[3]] = True
                    state.pmd.solved += int(np.count_nonzero(fresh[0] < fresh[1]))
        if pmd and cache is not None:
            cache.save(state.pmd.table)
    else:
        last_save = last_note = time.perf_counter()
        solved0 = state.pmd.solved if pmd else 0
        seconds0 = state.pmd.solve_seconds if pmd else 0.0
        for b in order:
            p, c, _, _ = _score_users(measure, users[b:b + 1], [bounds[b]], items)
            preds[b], covered[b] = p[0], c[0]
            now = time.perf_counter()
            if pmd and now - last_note > 10:
                rate = (state.pmd.solved - solved0) / max(state.pmd.solve_seconds - seconds0, 1e-9)
                say(f"pmd fraction={fraction:g} rep={rep}: user {b + 1}/{n}, "
                    f"{state.pmd.solved} pairs solved, {rate:.0f} couplings/s")
                last_note = now
            if pmd and cache is not None and now - last_save > SAVE_EVERY_S:
                cache.save(state.pmd.table)
                last_save = now
    return np.concatenate(preds), np.concatenate(covered)
