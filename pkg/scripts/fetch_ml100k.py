#!/usr/bin/env python3
"""Fetch MovieLens-100k from PyPI and derive proxy tag-relevance vectors.

grouplens.org is often unreachable from sandboxed machines, while PyPI is not.
The RecBole wheel ships ML-100k's interaction file (identical to ``u.data``
plus a header), the genre column of ``u.item`` and a Freebase knowledge graph
linked to the movies. This script writes

    <out>/u.data               TAB-separated user item rating timestamp
    <out>/genome-scores.csv    movieId,tagId,relevance  (proxy tag genome)

Raw features are the movie's genres and its knowledge-graph neighbours
(actors, director, writers, ...), idf-weighted. Like the real tag genome the
proxy relevance is dense: each movie's raw features are smoothed once through
the movie-movie cosine similarity, the ``--tags`` most frequent features are
kept as tags and relevance is scaled into [0, 1].

Usage: python scripts/fetch_ml100k.py [--out data/ml-100k] [--wheel PATH]
"""

import argparse
import collections
import csv
import glob
import io
import math
import os
import subprocess
import sys
import tempfile
import zipfile

import numpy as np

PREFIX = "recbole/dataset_example/ml-100k/"


def find_wheel(path):
    if path:
        return path
    tmp = tempfile.mkdtemp(prefix="recbole-")
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-d", tmp,
                    "recbole==1.2.1"], check=True)
    return glob.glob(os.path.join(tmp, "recbole-*.whl"))[0]


def read(z, name):
    return io.TextIOWrapper(z.open(PREFIX + name), encoding="utf-8").read().splitlines()[1:]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/ml-100k")
    ap.add_argument("--wheel", default=None, help="local recbole wheel (skips download)")
    ap.add_argument("--tags", type=int, default=1128)
    args = ap.parse_args(argv)

    z = zipfile.ZipFile(find_wheel(args.wheel))
    os.makedirs(args.out, exist_ok=True)

    inter = read(z, "ml-100k.inter")
    with open(os.path.join(args.out, "u.data"), "w") as fh:
        fh.write("\n".join(inter) + "\n")

    feats = collections.defaultdict(set)
    for line in read(z, "ml-100k.item"):
        item, _title, _year, genres = line.split("\t")
        for g in genres.split():
            feats[int(item)].add("genre:" + g)

    link = {}
    for line in read(z, "ml-100k.link"):
        item, entity = line.split("\t")
        link[entity] = int(item)
    for line in read(z, "ml-100k.kg"):
        head, _rel, tail = line.split("\t")
        if head in link:
            feats[link[head]].add("kg:" + tail)
        if tail in link:
            feats[link[tail]].add("kg:" + head)

    df = collections.Counter(f for fs in feats.values() for f in fs)
    movies = sorted(feats)
    n_movies = len(movies)
    universe = sorted(f for f, c in df.items() if c >= 2)
    col = {f: k for k, f in enumerate(universe)}
    X = np.zeros((n_movies, len(universe)))
    for r, movie in enumerate(movies):
        for f in feats[movie]:
            if f in col:
                X[r, col[f]] = math.log(n_movies / df[f])
    X /= np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1e-300)
    # ties broken by name so the tag list is reproducible
    tags = sorted(universe, key=lambda f: (-df[f], f))[:args.tags]
    keep = np.array([col[f] for f in tags])
    Y = (X @ X.T) @ X[:, keep]
    Y /= Y.max()
    with open(os.path.join(args.out, "genome-scores.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["movieId", "tagId", "relevance"])
        for r, movie in enumerate(movies):
            for t in np.nonzero(Y[r] >= 1e-4)[0]:
                w.writerow([movie, t + 1, f"{Y[r, t]:.4f}"])
    print(f"wrote {len(inter)} ratings and {len(tags)} proxy tags for {n_movies} movies "
          f"to {args.out}")


if __name__ == "__main__":
    main()
