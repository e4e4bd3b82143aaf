"""``prefmover`` command line: ingest, metric, case-study, pair, evaluate."""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
import time
from importlib import resources

import numpy as np

from . import __version__
from .core import item_metric_from_similarity
from .datasets import (
    ITEM_CACHE_MAGIC,
    ITEM_CACHE_VERSION,
    PARSERS,
    build_item_metric,
    load_dataset,
    load_similarity_csv,
    load_tag_genome,
)
from .errors import CacheInvalid, ConfigError, NotFound, ParseError, PrefMoverError
from .evaluation import (
    BASELINE,
    FRACTIONS,
    KS_100K,
    KS_1M,
    PAIR_CACHE_MAGIC,
    PAIR_CACHE_VERSION,
    SplitSpec,
    run_sweep,
)
from .measures import NAMES, PLOTTED, lookup, measure_catalog, pmd_solution

log = logging.getLogger("prefmover")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3

PRESETS = {
    "fig3a": {"dataset": "ml-100k", "fractions": FRACTIONS, "k": (40,)},
    "fig3b": {"dataset": "ml-100k", "fractions": (0.8,), "k": KS_100K},
    "fig3c": {"dataset": "ml-100k", "fractions": (0.1,), "k": KS_100K},
    "fig3d": {"dataset": "ml-1m", "fractions": FRACTIONS, "k": (40,)},
    "fig3e": {"dataset": "ml-1m", "fractions": (0.8,), "k": KS_1M},
    "fig3f": {"dataset": "ml-1m", "fractions": (0.1,), "k": KS_1M},
}

# settings that may come from flags or the config file, with their defaults
DEFAULTS = {
    "dataset": "csv",
    "ratings": None,
    "genome": None,
    "similarity": None,
    "mode": None,  # one-minus for similarity tables, arccos for tag genomes
    "measures": ",".join(PLOTTED + (BASELINE,)),
    "fractions": "0.8",
    "k": "40",
    "reps": "5",
    "seed": "0",
    "solver": "exact",
    "epsilon": "1e-3",
    "truncate": None,
    "jobs": str(os.cpu_count() or 1),
    "out": "prefmover-out",
    "cache_dir": None,
    "preset": None,
}

CASE_PAIRS = (("u1", "u2"), ("u2", "u3"), ("u4", "u5"), ("u5", "u6"))
CASE_COLUMNS = ("cos", "pcc", "msd", "jaccard", "urp", "jmsd", "nhsm", "bcf", "n-bcf",
                "husm", "n-husm", "pmd")


def version_string():
    return (f"prefmover {__version__} (item cache {ITEM_CACHE_MAGIC.decode()} "
            f"v{ITEM_CACHE_VERSION}, pair cache {PAIR_CACHE_MAGIC.decode()} "
            f"v{PAIR_CACHE_VERSION})")


# --- configuration --------------------------------------------------------------

def read_config(path):
    """Flat ``key = value`` file; an INI section header is optional."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text if text.lstrip().startswith("[") else "[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise ConfigError(f"{path}: unknown key {key!r}")
            values[key] = value
    return values


def resolve(args):
    """Merge flags > config file > preset > defaults into one validated dict."""
    file_values = read_config(args.config) if args.config else {}
    merged = dict(DEFAULTS)
    preset = getattr(args, "preset", None) or file_values.get("preset")
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        p = PRESETS[preset]
        merged.update(dataset=p["dataset"], fractions=",".join(map(str, p["fractions"])),
                      k=",".join(map(str, p["k"])))
    merged.update(file_values)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return validate(merged)


def _floats(text, name):
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--{name}: expected comma-separated numbers, got {text!r}") from None


def _ints(text, name):
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--{name}: expected comma-separated integers, got {text!r}") from None


def validate(c):
    out = dict(c)
    if c["dataset"] not in PARSERS:
        raise ConfigError(f"--dataset must be one of {', '.join(PARSERS)}")
    if c["mode"] is None:
        out["mode"] = "one-minus" if c["dataset"] == "csv" and not c["genome"] else "arccos"
    elif c["mode"] not in ("arccos", "one-minus"):
        raise ConfigError("--mode must be arccos or one-minus")
    if c["solver"] not in ("exact", "entropic"):
        raise ConfigError("--solver must be exact or entropic")
    out["measures"] = [m.strip() for m in str(c["measures"]).split(",") if m.strip()]
    bad = [m for m in out["measures"] if m not in NAMES and m != BASELINE]
    if bad or not out["measures"]:
        raise ConfigError(f"--measures: unknown {', '.join(bad) or '(empty)'}; "
                          f"known: {', '.join(NAMES + (BASELINE,))}")
    out["fractions"] = _floats(c["fractions"], "fractions")
    if not out["fractions"] or any(not 0 < f < 1 for f in out["fractions"]):
        raise ConfigError("--fractions must be nonempty and within (0, 1)")
    out["k"] = _ints(c["k"], "k")
    if not out["k"] or min(out["k"]) < 1:
        raise ConfigError("--k must be nonempty positive integers")
    for key in ("reps", "seed", "jobs"):
        vals = _ints(c[key], key)
        if len(vals) != 1:
            raise ConfigError(f"--{key} takes one integer")
        out[key] = vals[0]
    if out["reps"] < 1 or out["jobs"] < 1:
        raise ConfigError("--reps and --jobs must be at least 1")
    eps = _floats(c["epsilon"], "epsilon")
    if len(eps) != 1 or not eps[0] > 0:
        raise ConfigError("--epsilon must be one positive number")
    out["epsilon"] = eps[0]
    if c["truncate"] not in (None, "", "0", 0):
        t = _ints(c["truncate"], "truncate")
        if len(t) != 1 or t[0] < 1:
            raise ConfigError("--truncate must be a positive integer")
        out["truncate"] = t[0]
    else:
        out["truncate"] = None
    return out


# --- shared loading -------------------------------------------------------------

def _fixture(name):
    return str(resources.files("prefmover.fixtures").joinpath(name))


def _align_similarity(ratings, labels, sim):
    try:
        order = [labels.index(str(lab)) for lab in ratings.item_labels]
    except ValueError as exc:
        raise ConfigError(f"similarity table lacks a rated item: {exc}") from None
    return sim[np.ix_(order, order)]


def load_inputs(cfg, need_metric=True):
    """Ratings plus (optionally) the item metric the config points at."""
    if cfg["dataset"] == "csv" and cfg["ratings"] is None:
        cfg = dict(cfg, ratings=_fixture("toy-ratings.csv"))
        if cfg["similarity"] is None and cfg["genome"] is None:
            cfg["similarity"] = _fixture("toy-similarity.csv")
    if cfg["ratings"] is None:
        raise ConfigError("--ratings is required for dataset " + cfg["dataset"])
    if not os.path.exists(cfg["ratings"]):
        raise ConfigError(f"--ratings: no such file {cfg['ratings']}")
    ratings, manifest = load_dataset(cfg["dataset"], cfg["ratings"], cfg["genome"])
    if not need_metric:
        return ratings, None, manifest
    if cfg["similarity"]:
        if not os.path.exists(cfg["similarity"]):
            raise ConfigError(f"--similarity: no such file {cfg['similarity']}")
        labels, sim = load_similarity_csv(cfg["similarity"])
        metric = item_metric_from_similarity(_align_similarity(ratings, labels, sim),
                                             cfg["mode"], labels=list(ratings.item_labels))
        return ratings, metric, manifest
    if not cfg["genome"]:
        raise ConfigError("--genome is required for measures that use item similarity")
    if not os.path.exists(cfg["genome"]):
        raise ConfigError(f"--genome: no such file {cfg['genome']}")
    vectors, missing = load_tag_genome(cfg["genome"], ratings.item_labels)
    os.makedirs(cfg["out"], exist_ok=True)
    cache = os.path.join(cfg["out"], f"items-{cfg['mode']}.pmdc")
    metric = build_item_metric(vectors, cfg["mode"], missing, cache)
    return ratings, metric, manifest


# --- commands -------------------------------------------------------------------

def cmd_ingest(cfg, args):
    ratings, _, manifest = load_inputs(cfg, need_metric=False)
    n = ratings.num_entries
    density = n / max(ratings.num_users * ratings.num_items, 1)
    print(f"{manifest.name}: {ratings.num_users} users, {ratings.num_items} items, "
          f"{n} ratings (density {density:.4%})")
    os.makedirs(cfg["out"], exist_ok=True)
    path = os.path.join(cfg["out"], "manifest.json")
    with open(path, "w") as fh:
        json.dump({"name": manifest.name, "ratings_path": manifest.ratings_path,
                   "genome_path": manifest.genome_path, "scale": list(manifest.scale),
                   "user_ids": [str(u) for u in manifest.user_ids],
                   "item_ids": [str(i) for i in manifest.item_ids]}, fh)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_metric(cfg, args):
    from .core import check_triangle

    ratings, metric, _ = load_inputs(cfg)
    n_missing = int(metric.missing.sum())
    worst = check_triangle(metric)
    d = metric.dense()[np.tril_indices(metric.n_items, -1)]
    print(f"{metric.n_items} items, mode {metric.mode}, d_max {metric.d_max:.6g}, "
          f"{n_missing} without genome vector")
    if d.size:
        print("distance percentiles 1/50/99: "
              + " / ".join(f"{x:.4f}" for x in np.percentile(d, [1, 50, 99])))
    print(f"worst sampled triangle violation {worst:.3g}")
    return EXIT_OK


def case_table(ratings, metric, pairs=CASE_PAIRS):
    """``{(a, b): {measure: value or None}}``; MSD and PMD as ``1 - value``."""
    table = {}
    for a, b in pairs:
        u, v = ratings.user_index(a), ratings.user_index(b)
        row = {}
        for m in measure_catalog():
            res = m(u, v, ratings, metric)
            row[m.name] = res.as_similarity() if res.computable else None
        table[(a, b)] = row
    return table


def golden_failures(ratings, sim_table):
    """Check the case-study values; returns a list of failure messages."""
    fails = []
    tol = 1e-9

    def expect(label, got, want):
        if got is None or want is None:
            if got is not want:
                fails.append(f"{label}: got {got}, expected {want}")
        elif abs(got - want) > tol:
            fails.append(f"{label}: got {got:.12g}, expected {want}")

    tables = {mode: case_table(ratings, item_metric_from_similarity(sim_table, mode))
              for mode in ("one-minus", "arccos")}
    t = tables["one-minus"]
    for pair in CASE_PAIRS[:2]:
        for m, want in (("cos", 1), ("pcc", 1), ("msd", 1), ("jaccard", 0.5), ("urp", 0.5),
                        ("jmsd", 0.5)):
            expect(f"{m} {pair}", t[pair][m], want)
    for pair in CASE_PAIRS[2:]:
        expect(f"urp {pair}", t[pair]["urp"], 0.5)
        for m in ("cos", "pcc", "msd", "jmsd", "nhsm"):
            expect(f"{m} {pair}", t[pair][m], None)
    expect("jaccard ('u4', 'u5')", t[CASE_PAIRS[2]]["jaccard"], 0.0)
    expect("1-pmd ('u4', 'u5')", t[CASE_PAIRS[2]]["pmd"], 0.3)
    expect("1-pmd ('u5', 'u6')", t[CASE_PAIRS[3]]["pmd"], 0.8)
    expect("n-bcf ('u4', 'u5')", t[CASE_PAIRS[2]]["n-bcf"], 0.3)
    expect("n-bcf ('u5', 'u6')", t[CASE_PAIRS[3]]["n-bcf"], 0.8)
    if not t[CASE_PAIRS[2]]["bcf"] > t[CASE_PAIRS[3]]["bcf"]:
        fails.append("bcf should rank (u4, u5) above (u5, u6)")
    for mode, tm in tables.items():
        # similarities 1 - PMD: higher means closer
        if not tm[CASE_PAIRS[0]]["pmd"] > tm[CASE_PAIRS[1]]["pmd"]:
            fails.append(f"{mode}: PMD(u1,u2) should be below PMD(u2,u3)")
        if not tm[CASE_PAIRS[2]]["pmd"] < tm[CASE_PAIRS[3]]["pmd"]:
            fails.append(f"{mode}: PMD(u4,u5) should exceed PMD(u5,u6)")
    return fails


def _fmt(x):
    return "---" if x is None else f"{x:.4g}"


def cmd_case_study(cfg, args):
    ratings_path = cfg["ratings"] or _fixture("toy-ratings.csv")
    sim_path = cfg["similarity"] or _fixture("toy-similarity.csv")
    for flag, path in (("--ratings", ratings_path), ("--similarity", sim_path)):
        if not os.path.exists(path):
            raise ConfigError(f"{flag}: fixture {path} not found")
    ratings, _ = load_dataset("csv", ratings_path)
    labels, sim = load_similarity_csv(sim_path)
    sim = _align_similarity(ratings, labels, sim)
    for a, b in CASE_PAIRS:
        for name in (a, b):
            try:
                ratings.user_index(name)
            except NotFound:
                raise ConfigError(f"case-study fixture lacks user {name}") from None
    metric = item_metric_from_similarity(sim, cfg["mode"])
    table = case_table(ratings, metric)
    headers = ["pair"] + [("1-" + c) if c in ("msd", "pmd") else c for c in CASE_COLUMNS]
    rows = [[f"{a} & {b}"] + [_fmt(table[(a, b)][c]) for c in CASE_COLUMNS]
            for a, b in CASE_PAIRS]
    widths = [max(len(h), *(len(r[k]) for r in rows)) for k, h in enumerate(headers)]
    print(f"item distance: {cfg['mode']}")
    print("  ".join(h.rjust(w) for h, w in zip(headers, widths)))
    for r in rows:
        print("  ".join(x.rjust(w) for x, w in zip(r, widths)))
    os.makedirs(cfg["out"], exist_ok=True)
    path = os.path.join(cfg["out"], "case-study.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(headers)
        for a, b in CASE_PAIRS:
            w.writerow([f"{a} & {b}"] + [
                "---" if table[(a, b)][c] is None else repr(table[(a, b)][c])
                for c in CASE_COLUMNS])
    print(f"wrote {path}", file=sys.stderr)
    if args.check:
        fails = golden_failures(ratings, sim)
        for f in fails:
            print(f"CHECK FAILED: {f}", file=sys.stderr)
        if fails:
            return EXIT_CHECK
        print("all case-study checks passed", file=sys.stderr)
    return EXIT_OK


def cmd_pair(cfg, args):
    measure = lookup(args.measure)
    ratings, metric, _ = load_inputs(cfg, need_metric=measure.needs_metric)
    u, v = ratings.user_index(args.user_a), ratings.user_index(args.user_b)
    if measure.name == "pmd":
        problem, sol = pmd_solution(u, v, ratings, metric, cfg["solver"], cfg["epsilon"])
        print(f"pmd({args.user_a}, {args.user_b}) = {sol.optimal_cost:.10g} "
              f"[distance, solver {sol.solver}]")
        if args.coupling:
            print("item_a,item_b,mass,cost")
            for a, b, mass in sol.coupling.flows(min_mass=1e-12):
                print(f"{ratings.item_name(a)},{ratings.item_name(b)},{mass:.10g},"
                      f"{metric.distance(a, b):.10g}")
        return EXIT_OK
    res = measure(u, v, ratings, metric)
    if res.computable:
        print(f"{measure.name}({args.user_a}, {args.user_b}) = {res.value:.10g} [{res.kind}]")
    else:
        print(f"{measure.name}({args.user_a}, {args.user_b}) = uncomputable [{res.kind}]")
    return EXIT_OK


def cmd_evaluate(cfg, args):
    needs = [m for m in cfg["measures"] if m != BASELINE and lookup(m).needs_metric]
    if needs and not cfg["genome"] and not cfg["similarity"]:
        raise ConfigError(f"--genome is required for measures {', '.join(needs)}")
    ratings, metric, manifest = load_inputs(cfg, need_metric=bool(needs))
    cache_dir = cfg["cache_dir"] or os.path.join(cfg["out"], "cache")
    started = time.perf_counter()

    def progress(msg):
        print(f"[{time.perf_counter() - started:8.1f}s] {msg}", file=sys.stderr, flush=True)

    echo = {k: v for k, v in cfg.items()}
    echo["version"] = version_string()
    report = run_sweep(ratings, metric, cfg["measures"], cfg["fractions"], cfg["k"],
                       SplitSpec(cfg["fractions"][0], cfg["reps"], cfg["seed"]),
                       jobs=cfg["jobs"], solver=cfg["solver"], epsilon=cfg["epsilon"],
                       truncate=cfg["truncate"], cache_dir=cache_dir, progress=progress,
                       config=echo)
    report.write(cfg["out"])
    if report.config.get("approximate"):
        print("NOTE: approximate PMD (truncation or entropic solver)")
    print(report.summary())
    for f in report.failures:
        print(f"failed cell: {f}", file=sys.stderr)
    print(f"wrote report.csv, report.json, fig-sparsity.csv, fig-ksweep.csv to {cfg['out']}",
          file=sys.stderr)
    return EXIT_OK


# --- parser -------------------------------------------------------------------------

def _data_flags(p):
    p.add_argument("--dataset", choices=sorted(PARSERS))
    p.add_argument("--ratings", help="ratings file (u.data, ratings.dat or user,item,rating CSV)")
    p.add_argument("--genome", help="tag-genome genome-scores.csv")
    p.add_argument("--similarity", help="square item-similarity CSV (instead of a genome)")
    p.add_argument("--mode", choices=("arccos", "one-minus"), help="similarity to distance map")
    p.add_argument("--out", help="output directory")


def build_parser():
    ap = argparse.ArgumentParser(prog="prefmover",
                                 description="User distances and K-NN rating prediction.")
    ap.add_argument("--version", action="version", version=version_string())
    ap.add_argument("--config", help="key = value file; flags override it")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a ratings file and write its id remap")
    _data_flags(p)

    p = sub.add_parser("metric", help="build (and cache) the item distance table")
    _data_flags(p)

    p = sub.add_parser("case-study", help="toy comparison table of all measures")
    _data_flags(p)
    p.add_argument("--check", action="store_true", help="exit 1 if a golden value is off")

    p = sub.add_parser("pair", help="score one pair of users")
    _data_flags(p)
    p.add_argument("user_a")
    p.add_argument("user_b")
    p.add_argument("--measure", default="pmd", choices=NAMES)
    p.add_argument("--coupling", action="store_true", help="print the optimal transport plan")
    p.add_argument("--solver", choices=("exact", "entropic"))
    p.add_argument("--epsilon")

    p = sub.add_parser("evaluate", help="cross-validated MAE sweep")
    _data_flags(p)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--measures", help=f"comma list from {','.join(NAMES + (BASELINE,))}")
    p.add_argument("--fractions", help="train fractions, e.g. 0.8,0.6,0.4,0.2,0.1")
    p.add_argument("--k", help="neighborhood sizes, e.g. 5,10,40")
    p.add_argument("--reps")
    p.add_argument("--seed")
    p.add_argument("--solver", choices=("exact", "entropic"))
    p.add_argument("--epsilon")
    p.add_argument("--truncate", help="keep each user's top-T preference masses (approximate)")
    p.add_argument("--jobs", help="worker processes (default: all cores)")
    p.add_argument("--cache-dir", dest="cache_dir", help="PMD pair cache directory")
    return ap


COMMANDS = {"ingest": cmd_ingest, "metric": cmd_metric, "case-study": cmd_case_study,
            "pair": cmd_pair, "evaluate": cmd_evaluate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, CacheInvalid, NotFound, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PrefMoverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
