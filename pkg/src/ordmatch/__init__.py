"""Ordinal metric matching: exact mechanisms, hard instances, and distortion
oracles for reproducing every bound at desk scale.
"""

from .core import (
    DisconnectedGraphError,
    FractionalMatching,
    Instance,
    InvalidInputError,
    Matching,
    Metric,
    WeightedGraph,
    consistent,
    cost,
    fractional_cost,
    metric_from_graph,
    prefs_from_metric,
)

__all__ = [
    "DisconnectedGraphError",
    "FractionalMatching",
    "Instance",
    "InvalidInputError",
    "Matching",
    "Metric",
    "WeightedGraph",
    "consistent",
    "cost",
    "fractional_cost",
    "metric_from_graph",
    "prefs_from_metric",
]
