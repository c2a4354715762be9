"""Degree statistics, degree assortativity and cooperation-graph extraction."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .model import BinaryGraph

if TYPE_CHECKING:
    from .dynamics import CooperationState

__all__ = [
    "DegreeStats",
    "AssortativityResult",
    "degree_stats",
    "assortativity",
    "cooperation_graph",
    "DEFAULT_COOP_THRESHOLD",
]

DEFAULT_COOP_THRESHOLD = 1e-6


@dataclass(frozen=True)
class DegreeStats:
    degrees: np.ndarray = field(repr=False)
    mean: float
    histogram: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "degrees": [int(k) for k in self.degrees],
            "mean": self.mean,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DegreeStats":
        return cls(
            np.asarray(d["degrees"], dtype=np.int64),
            float(d["mean"]),
            {int(k): int(v) for k, v in d["histogram"].items()},
        )


@dataclass(frozen=True)
class AssortativityResult:
    """Degree assortativity; ``value`` is None when the coefficient is undefined."""

    value: float | None
    reason: str | None = None

    @property
    def defined(self) -> bool:
        return self.value is not None

    def to_dict(self) -> dict:
        if self.value is None:
            return {"value": None, "reason": self.reason}
        return {"value": self.value}

    @classmethod
    def from_dict(cls, d: dict) -> "AssortativityResult":
        return cls(d.get("value"), d.get("reason"))

    def __float__(self) -> float:
        return float("nan") if self.value is None else self.value


def degree_stats(g: BinaryGraph) -> DegreeStats:
    deg = g.degrees()
    values, counts = np.unique(deg, return_counts=True)
    return DegreeStats(
        degrees=deg,
        mean=2.0 * g.num_edges / g.n,
        histogram={int(k): int(c) for k, c in zip(values, counts)},
    )


def assortativity(g: BinaryGraph) -> AssortativityResult:
    """Pearson correlation of the degrees at the two ends of every edge.

    Each undirected edge contributes both orientations, so the two endpoint
    variables share one distribution.  Sums are accumulated in exact integer
    arithmetic; the coefficient is undefined when the endpoint degrees do not vary.
    """
    return _edge_degree_correlation(g.degrees(), g.edges[:, 0], g.edges[:, 1])


def _edge_degree_correlation(deg, src, dst) -> AssortativityResult:
    if len(src) == 0:
        return AssortativityResult(None, "graph has no edges")
    x = deg[src].astype(np.int64)
    y = deg[dst].astype(np.int64)
    m2 = 2 * len(src)
    # both orientations; per-array sums fit int64, products go through Python ints
    s1 = int(x.sum()) + int(y.sum())
    s2 = int((x * x).sum()) + int((y * y).sum())
    sxy = 2 * int((x * y).sum())
    var = m2 * s2 - s1 * s1
    if var == 0:
        return AssortativityResult(None, "endpoint degrees have zero variance")
    cov = m2 * sxy - s1 * s1
    r = cov / var
    return AssortativityResult(float(min(1.0, max(-1.0, r))))


def cooperation_graph(state: "CooperationState", threshold: float = DEFAULT_COOP_THRESHOLD) -> BinaryGraph:
    """Undirected graph with edge ``{i, j}`` iff ``e_ij + e_ji > threshold``."""
    if not threshold >= 0:
        raise ValueError(f"threshold must be non-negative, got {threshold}")
    e = np.asarray(state.e)
    w = e + e.T
    i, j = np.nonzero(np.triu(w > threshold, 1))
    return BinaryGraph(e.shape[0], np.column_stack([i, j]))


def cooperation_observables(e: np.ndarray, threshold: float = DEFAULT_COOP_THRESHOLD):
    """Mean degree and assortativity of the cooperation graph of ``e`` without
    building a ``BinaryGraph``; agrees exactly with the graph-based path."""
    adj = (e + e.T) > threshold
    np.fill_diagonal(adj, False)
    deg = adj.sum(axis=1)
    i, j = np.nonzero(np.triu(adj, 1))
    return float(deg.sum()) / e.shape[0], _edge_degree_correlation(deg, i, j)
