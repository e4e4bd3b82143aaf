"""User distances for collaborative filtering via optimal transport of preferences."""

__version__ = "0.1.0"

from .core import (
    Coupling,
    DenseItemMetric,
    ItemMetric,
    Preference,
    SparseRatings,
    VectorItemMetric,
    build_preference,
    check_triangle,
    item_metric_from_similarity,
)
from .measures import MeasureResult, lookup, measure_catalog, pmd
from .transport import TransportProblem, TransportSolution, solve

__all__ = [
    "Coupling", "DenseItemMetric", "ItemMetric", "MeasureResult", "Preference",
    "SparseRatings", "TransportProblem", "TransportSolution", "VectorItemMetric",
    "build_preference", "check_triangle", "item_metric_from_similarity", "lookup",
    "measure_catalog", "pmd", "solve",
]
