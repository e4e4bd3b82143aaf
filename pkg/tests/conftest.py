import os
from importlib import resources

import numpy as np
import pytest

from prefmover.cli import _align_similarity
from prefmover.core import item_metric_from_similarity
from prefmover.datasets import load_similarity_csv, parse_csv

ML100K_DIRS = [os.environ.get("PREFMOVER_ML100K", ""), "/root/data/ml-100k",
               os.path.join(os.path.dirname(__file__), "..", "data", "ml-100k")]


def fixture_path(name):
    return str(resources.files("prefmover.fixtures").joinpath(name))


@pytest.fixture(scope="session")
def toy():
    ratings = parse_csv(fixture_path("toy-ratings.csv"))
    labels, sim = load_similarity_csv(fixture_path("toy-similarity.csv"))
    return ratings, _align_similarity(ratings, labels, sim)


@pytest.fixture(scope="session")
def toy_metric(toy):
    ratings, sim = toy
    return {mode: item_metric_from_similarity(sim, mode) for mode in ("one-minus", "arccos")}


def ml100k_dir():
    for d in ML100K_DIRS:
        if d and os.path.exists(os.path.join(d, "u.data")) \
                and os.path.exists(os.path.join(d, "genome-scores.csv")):
            return d
    return None


def random_ratings(rng, n_users, n_items, density, scale=(1, 5)):
    from prefmover.core import SparseRatings

    mask = rng.random((n_users, n_items)) < density
    mask[np.arange(n_users), rng.integers(0, n_items, n_users)] = True
    u, i = np.nonzero(mask)
    r = rng.integers(scale[0], scale[1] + 1, len(u)).astype(float)
    return SparseRatings(u, i, r, num_users=n_users, num_items=n_items, scale=scale)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":").split(".")[0])):
            terminalreporter.write_line(line)
