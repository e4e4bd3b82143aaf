"""Registry of every pairwise user measure under its stable key."""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Callable

from .bcf import AGREEMENT, HUSM, bcf_family_sim
from .classic import (
    DISTANCE,
    SIMILARITY,
    cos_sim,
    jaccard_sim,
    jmsd_sim,
    msd_dist,
    nhsm_sim,
    pcc_sim,
    urp_sim,
)
from .pmd import pmd


@dataclass(frozen=True)
class Measure:
    name: str
    function: Callable
    kind: str
    needs_metric: bool = False

    def __iter__(self):
        return iter((self.name, self.function, self.kind))

    def __call__(self, u, v, ratings, metric=None, **options):
        if not self.needs_metric:
            return self.function(u, v, ratings)
        if metric is None:
            raise ValueError(f"measure {self.name!r} needs item similarities")
        return self.function(u, v, ratings, metric, **options)


_CATALOG = (
    Measure("cos", cos_sim, SIMILARITY),
    Measure("pcc", pcc_sim, SIMILARITY),
    Measure("msd", msd_dist, DISTANCE),
    Measure("jaccard", jaccard_sim, SIMILARITY),
    Measure("urp", urp_sim, SIMILARITY),
    Measure("jmsd", jmsd_sim, SIMILARITY),
    Measure("nhsm", nhsm_sim, SIMILARITY),
    Measure("bcf", partial(bcf_family_sim, kernel=AGREEMENT, normalized=False), SIMILARITY, True),
    Measure("n-bcf", partial(bcf_family_sim, kernel=AGREEMENT, normalized=True), SIMILARITY, True),
    Measure("husm", partial(bcf_family_sim, kernel=HUSM, normalized=False), SIMILARITY, True),
    Measure("n-husm", partial(bcf_family_sim, kernel=HUSM, normalized=True), SIMILARITY, True),
    Measure("pmd", pmd, DISTANCE, True),
)

NAMES = tuple(m.name for m in _CATALOG)

# the seven baselines plotted next to PMD in the MAE sweeps
PLOTTED = ("pmd", "cos", "pcc", "msd", "jmsd", "nhsm", "bcf", "n-bcf")


def measure_catalog() -> list:
    return list(_CATALOG)


def lookup(name: str) -> Measure:
    for m in _CATALOG:
        if m.name == name:
            return m
    raise KeyError(f"unknown measure {name!r}; known: {', '.join(NAMES)}")
