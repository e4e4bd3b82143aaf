import csv
import json
import shutil

import numpy as np
import pytest

from prefmover import __version__
from prefmover.cli import build_parser, main, resolve

from conftest import fixture_path


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert __version__ in out and "PMDC v1" in out and "PMDP v1" in out


def test_case_study_table_and_check(capsys, tmp_path):
    code, out, err = run(capsys, "case-study", "--out", str(tmp_path), "--check")
    assert code == 0, err
    lines = out.splitlines()
    assert lines[0] == "item distance: one-minus"
    assert lines[1].split() == ["pair", "cos", "pcc", "1-msd", "jaccard", "urp", "jmsd", "nhsm",
                                "bcf", "n-bcf", "husm", "n-husm", "1-pmd"]
    assert lines[4].split()[:3] == ["u4", "&", "u5"] and "---" in lines[4]
    with open(tmp_path / "case-study.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["pair"] for r in rows] == ["u1 & u2", "u2 & u3", "u4 & u5", "u5 & u6"]
    assert float(rows[2]["1-pmd"]) == pytest.approx(0.3, abs=1e-12)
    assert float(rows[3]["n-bcf"]) == pytest.approx(0.8, abs=1e-12)
    assert rows[2]["cos"] == "---"
    assert "all case-study checks passed" in err


def test_case_study_check_fails_on_corrupted_fixture(capsys, tmp_path):
    bad = tmp_path / "ratings.csv"
    text = open(fixture_path("toy-ratings.csv")).read().splitlines()
    # bump one of u1's ratings so COS(u1, u2) drops below 1
    for k, line in enumerate(text):
        fields = line.split(",")
        if fields[0] == "u1":
            fields[2] = "1" if fields[2] != "1" else "5"
            text[k] = ",".join(fields)
            break
    bad.write_text("\n".join(text) + "\n")
    code, _, err = run(capsys, "case-study", "--ratings", str(bad), "--out", str(tmp_path),
                       "--check")
    assert code == 1 and "CHECK FAILED" in err


def test_case_study_missing_fixture(capsys, tmp_path):
    code, _, err = run(capsys, "case-study", "--ratings", str(tmp_path / "nope.csv"))
    assert code == 2 and "--ratings" in err


def test_pair_coupling(capsys):
    code, out, _ = run(capsys, "pair", "u5", "u6", "--coupling")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("pmd(u5, u6) = 0.2 ")
    assert lines[1] == "item_a,item_b,mass,cost"
    flows = [line.split(",") for line in lines[2:]]
    assert sum(float(f[2]) for f in flows) == pytest.approx(1)
    assert sum(float(f[2]) * float(f[3]) for f in flows) == pytest.approx(0.2)


def test_pair_uncomputable_and_self(capsys):
    code, out, _ = run(capsys, "pair", "u4", "u5", "--measure", "pcc")
    assert code == 0 and "uncomputable" in out
    code, out, _ = run(capsys, "pair", "u3", "u3")
    assert code == 0 and out.startswith("pmd(u3, u3) = 0 ")


def test_pair_unknown_user(capsys):
    code, _, err = run(capsys, "pair", "u1", "u99")
    assert code == 3 and "u99" in err


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("k = 10,20\nreps = 3\nfractions = 0.5\n")
    args = build_parser().parse_args(["--config", str(cfg), "evaluate", "--preset", "fig3b",
                                      "--reps", "2"])
    c = resolve(args)
    assert c["reps"] == 2  # flag beats file
    assert c["k"] == [10, 20]  # file beats preset
    assert c["fractions"] == [0.5]
    assert c["dataset"] == "ml-100k"  # preset beats default
    assert c["seed"] == 0


def test_config_with_section(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[evaluate]\nmeasures = pmd,cos\n")
    c = resolve(build_parser().parse_args(["--config", str(cfg), "evaluate"]))
    assert c["measures"] == ["pmd", "cos"]


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("neighbours = 5\n")
    code, _, err = run(capsys, "--config", str(cfg), "evaluate")
    assert code == 2 and "neighbours" in err


@pytest.mark.parametrize("flags", [["--k", "0"], ["--fractions", "1.5"],
                                   ["--measures", "pmd,adjusted-cosine"], ["--reps", "x"]])
def test_bad_values_exit_2(capsys, flags):
    code, _, err = run(capsys, "evaluate", *flags)
    assert code == 2 and "config error" in err


def test_missing_genome(capsys, tmp_path):
    ratings = tmp_path / "u.data"
    ratings.write_text("1\t1\t3\t0\n2\t1\t4\t0\n")
    code, _, err = run(capsys, "evaluate", "--dataset", "ml-100k", "--ratings", str(ratings),
                       "--measures", "pmd,cos", "--out", str(tmp_path))
    assert code == 2 and "--genome" in err


def test_bad_ratings_exit_3(capsys, tmp_path):
    ratings = tmp_path / "u.data"
    ratings.write_text("1\t1\t3\t0\n1\t2\t9\t0\n")
    code, _, err = run(capsys, "ingest", "--dataset", "ml-100k", "--ratings", str(ratings),
                       "--out", str(tmp_path))
    assert code == 3 and "u.data:2:" in err


def test_ingest(capsys, tmp_path):
    code, out, _ = run(capsys, "ingest", "--out", str(tmp_path))
    assert code == 0 and "6 users" in out
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["user_ids"] == ["u1", "u2", "u3", "u4", "u5", "u6"]


def test_metric(capsys):
    code, out, _ = run(capsys, "metric", "--mode", "arccos")
    assert code == 0 and "mode arccos" in out and "d_max 3.14159" in out


def _small_dataset(tmp_path):
    rng = np.random.default_rng(0)
    lines = ["user,item,rating"]
    for u in range(25):
        for i in rng.choice(20, 8, replace=False):
            lines.append(f"u{u},m{i},{rng.integers(1, 6)}")
    (tmp_path / "r.csv").write_text("\n".join(lines) + "\n")
    x = rng.random((20, 5))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    sim = np.clip(x @ x.T, 0, 1)
    np.fill_diagonal(sim, 1)
    names = [f"m{i}" for i in range(20)]
    rows = ["item," + ",".join(names)]
    rows += [names[i] + "," + ",".join(repr(float(s)) for s in sim[i]) for i in range(20)]
    (tmp_path / "s.csv").write_text("\n".join(rows) + "\n")
    return str(tmp_path / "r.csv"), str(tmp_path / "s.csv")


def test_evaluate_small(capsys, tmp_path):
    ratings, sim = _small_dataset(tmp_path)
    out_dir = tmp_path / "out"
    code, out, err = run(capsys, "evaluate", "--ratings", ratings, "--similarity", sim,
                         "--mode", "arccos", "--measures", "pmd,cos,n-bcf,user-mean",
                         "--fractions", "0.8,0.4", "--k", "3,10", "--reps", "2", "--jobs", "1",
                         "--out", str(out_dir))
    assert code == 0, err
    with open(out_dir / "report.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4 * 2 * 2 * 2
    assert {r["measure"] for r in rows} == {"pmd", "cos", "n-bcf", "user-mean"}
    for name in ("report.json", "fig-sparsity.csv", "fig-ksweep.csv"):
        assert (out_dir / name).exists()
    assert json.loads((out_dir / "report.json").read_text())["config"]["mode"] == "arccos"
    assert "user-mean" in out
    # second run reuses the pair cache and reproduces the numbers
    shutil.copy(out_dir / "report.csv", tmp_path / "first.csv")
    assert main(["evaluate", "--ratings", ratings, "--similarity", sim, "--mode", "arccos",
                 "--measures", "pmd,cos,n-bcf,user-mean", "--fractions", "0.8,0.4", "--k", "3,10",
                 "--reps", "2", "--jobs", "1", "--out", str(out_dir)]) == 0
    with open(out_dir / "report.csv") as a, open(tmp_path / "first.csv") as b:
        strip = [[r[:5] for r in csv.reader(f)] for f in (a, b)]
    assert strip[0] == strip[1]


def test_evaluate_cardinality(capsys, tmp_path):
    ratings, sim = _small_dataset(tmp_path)
    code, _, err = run(capsys, "evaluate", "--ratings", ratings, "--similarity", sim,
                       "--measures", "pmd,cos", "--fractions", "0.8", "--k", "40", "--reps", "1",
                       "--out", str(tmp_path / "out"))
    assert code == 0, err
    with open(tmp_path / "out" / "report.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2


def test_default_measures_include_baseline():
    c = resolve(build_parser().parse_args(["evaluate", "--preset", "fig3a"]))
    assert c["measures"] == ["pmd", "cos", "pcc", "msd", "jmsd", "nhsm", "bcf", "n-bcf",
                             "user-mean"]
    assert c["fractions"] == [0.8, 0.6, 0.4, 0.2, 0.1] and c["k"] == [40]
