import logging
import struct

import numpy as np
import pytest

from prefmover.datasets import (
    DatasetManifest,
    build_item_metric,
    load_dataset,
    load_similarity_csv,
    load_tag_genome,
    parse_csv,
    parse_ml1m,
    parse_ml100k,
    read_triangle,
    write_triangle,
)
from prefmover.errors import CacheInvalid, ParseError


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_ml100k_line(tmp_path):
    r = parse_ml100k(write(tmp_path, "u.data", "196\t242\t3\t881250949\n186\t302\t3\t891717742\n"))
    assert r.num_entries == 2
    u, i = r.user_labels.index(196), r.item_labels.index(242)
    assert r.rating(u, i) == 3.0
    # dense ids follow sorted raw ids
    assert r.user_labels == [186, 196]


def test_ml100k_empty(tmp_path):
    r = parse_ml100k(write(tmp_path, "u.data", ""))
    assert r.num_users == 0 and r.num_entries == 0


def test_ml100k_out_of_scale(tmp_path):
    with pytest.raises(ParseError) as err:
        parse_ml100k(write(tmp_path, "u.data", "1\t1\t3\t0\n1\t2\t9\t0\n"))
    assert err.value.line == 2


def test_ml100k_malformed(tmp_path):
    with pytest.raises(ParseError) as err:
        parse_ml100k(write(tmp_path, "u.data", "1\t1\t3\t0\nx\t2\t3\t0\n"))
    assert err.value.line == 2 and "u.data" in str(err.value)


def test_ml1m(tmp_path):
    r = parse_ml1m(write(tmp_path, "ratings.dat", "1::1193::5::978300760\n"))
    assert r.rating(0, 0) == 5.0 and r.item_labels == [1193]
    with pytest.raises(ParseError):
        parse_ml1m(write(tmp_path, "bad.dat", "1::1193::5\n"))


def test_duplicates_keep_last(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        r = parse_ml100k(write(tmp_path, "u.data", "1\t1\t3\t0\n1\t1\t4\t1\n"))
    assert r.num_entries == 1 and r.rating(0, 0) == 4.0
    assert "duplicate" in caplog.text


def test_reindex_is_stable(tmp_path):
    path = write(tmp_path, "u.data", "5\t9\t3\t0\n2\t9\t4\t0\n5\t1\t1\t0\n")
    a, b = parse_ml100k(path), parse_ml100k(path)
    assert a.user_labels == b.user_labels and a.item_labels == b.item_labels
    assert np.array_equal(a.csr.toarray(), b.csr.toarray())


def test_csv_labels_first_appearance(tmp_path):
    r = parse_csv(write(tmp_path, "t.csv", "user,item,rating\nbob,x,2\nann,y,5\nbob,y,1\n"))
    assert r.user_labels == ["bob", "ann"] and r.item_labels == ["x", "y"]
    assert r.rating(r.user_index("bob"), 1) == 1


def test_manifest(tmp_path):
    r, m = load_dataset("ml-100k", write(tmp_path, "u.data", "7\t3\t3\t0\n"))
    assert m.user_index(7) == 0 and m.item_index(3) == 0
    with pytest.raises(ValueError):
        DatasetManifest("ml-100k", "x", user_ids=[1, 1])
    with pytest.raises(ValueError):
        DatasetManifest("netflix", "x")


def test_genome(tmp_path):
    path = write(tmp_path, "g.csv", "movieId,tagId,relevance\n10,1,0.5\n10,3,0.2\n99,2,0.7\n")
    vecs, missing = load_tag_genome(path, [10, 20])
    np.testing.assert_allclose(vecs, [[0.5, 0, 0.2], [0, 0, 0]])
    assert list(missing) == [False, True]


def test_genome_duplicates(tmp_path, caplog):
    path = write(tmp_path, "g.csv", "10,1,0.5\n10,1,0.9\n")
    with caplog.at_level(logging.WARNING):
        vecs, _ = load_tag_genome(path, [10])
    assert vecs[0, 0] == 0.9 and "duplicate" in caplog.text


def test_genome_relevance_range(tmp_path):
    with pytest.raises(ParseError) as err:
        load_tag_genome(write(tmp_path, "g.csv", "movieId,tagId,relevance\n10,1,1.5\n"), [10])
    assert err.value.line == 2


def test_metric_basic():
    v = np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 0]])
    m = build_item_metric(v, "arccos", np.array([False, False, False, True]))
    assert m.distance(0, 1) == 0
    assert m.distance(0, 2) == pytest.approx(np.pi / 2, abs=1e-6)
    assert m.distance(0, 3) == m.d_max == np.pi and m.distance(3, 3) == 0
    assert m.is_metric and m.missing.sum() == 1


def test_metric_rejects_negative():
    with pytest.raises(ValueError):
        build_item_metric(np.array([[-1.0, 0]]))


def test_cache_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    v = rng.random((60, 8))
    path = str(tmp_path / "items.pmdc")
    built = build_item_metric(v, "arccos", cache_path=path)
    read = build_item_metric(v, "arccos", cache_path=path)
    i, j = rng.integers(0, 60, (2, 1000))
    exact = np.arccos(np.clip((v[i] * v[j]).sum(1) / np.linalg.norm(v[i], axis=1)
                              / np.linalg.norm(v[j], axis=1), -1, 1))
    exact[i == j] = 0
    np.testing.assert_allclose(read.paired(i, j), exact, atol=1e-6)
    assert np.array_equal(read.dense(), built.dense())


def test_cache_mismatch_rebuilds(tmp_path, caplog):
    v = np.random.default_rng(1).random((10, 3))
    path = str(tmp_path / "items.pmdc")
    ref = build_item_metric(v, "arccos", cache_path=path)
    # written for arccos, read for one-minus
    with pytest.raises(CacheInvalid):
        read_triangle(path, b"PMDC", 1, 1, 10, np.float32)
    with open(path, "r+b") as fh:
        fh.write(b"XXXX")
    with caplog.at_level(logging.WARNING):
        again = build_item_metric(v, "arccos", cache_path=path)
    assert "rebuilding" in caplog.text
    assert np.array_equal(again.dense(), ref.dense())
    with open(path, "rb") as fh:
        assert fh.read(4) == b"PMDC"


def test_triangle_format(tmp_path):
    path = str(tmp_path / "t.bin")
    m = np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0]], float)
    write_triangle(path, b"TEST", 7, 2, m, np.float32)
    raw = open(path, "rb").read()
    assert raw[:4] == b"TEST"
    assert struct.unpack("<IBI", raw[4:13]) == (7, 2, 3)
    np.testing.assert_array_equal(np.frombuffer(raw[13:], "<f4"), [1, 2, 3])
    for bad in ((b"TEST", 8, 2, 3), (b"TEST", 7, 2, 4), (b"NOPE", 7, 2, 3)):
        with pytest.raises(CacheInvalid):
            read_triangle(path, *bad, np.float32)
    open(path, "ab").write(b"\0")
    with pytest.raises(CacheInvalid):
        read_triangle(path, b"TEST", 7, 2, 3, np.float32)


def test_similarity_csv(tmp_path):
    labels, sim = load_similarity_csv(write(tmp_path, "s.csv", "item,a,b\na,1,0.5\nb,0.5,1\n"))
    assert labels == ["a", "b"] and sim[0, 1] == 0.5
    with pytest.raises(ParseError):
        load_similarity_csv(write(tmp_path, "bad.csv", "item,a,b\nb,1,0.5\na,0.5,1\n"))
