"""Components, shortest paths and metric distortion of k-NN graphs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import InvalidParameterError, PreconditionError
from .nngraph import NNGraph
from .pointproc import PointSet, Window, make_rng


@dataclass(frozen=True)
class ComponentLabeling:
    label: np.ndarray
    sizes: np.ndarray

    @property
    def count(self) -> int:
        return len(self.sizes)

    def largest(self) -> int:
        return int(np.argmax(self.sizes))


def components(g: NNGraph) -> ComponentLabeling:
    """Connected-component labels; components are numbered by smallest member."""
    _, label = connected_components(g.to_csr(), directed=False)
    # renumber by first appearance so labels do not depend on the backend
    _, first, inv = np.unique(label, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    label = rank[inv]
    return ComponentLabeling(label, np.bincount(label, minlength=len(first)))


def observation_set(ps: PointSet, labeling: ComponentLabeling, inner: Window) -> np.ndarray:
    """Vertices inside ``inner`` in the component with the most vertices inside ``inner``.

    Ties go to the lower component label.  Returns an empty array when no
    vertex falls inside the window.
    """
    inside = np.flatnonzero(inner.contains(ps.points))
    if inside.size == 0:
        return inside
    counts = np.bincount(labeling.label[inside])
    chosen = int(np.argmax(counts))
    return inside[labeling.label[inside] == chosen]


def sssp(g: NNGraph, source: int) -> np.ndarray:
    """Shortest-path lengths from ``source``; unreachable vertices get ``inf``."""
    if not 0 <= source < g.n:
        raise InvalidParameterError(f"source {source} out of range")
    return dijkstra(g.to_csr(), directed=False, indices=int(source))


def multi_source(g: NNGraph, sources) -> np.ndarray:
    """Row ``i`` holds shortest-path lengths from ``sources[i]``."""
    sources = np.asarray(sources, dtype=np.int64)
    return np.atleast_2d(dijkstra(g.to_csr(), directed=False, indices=sources))


@dataclass(frozen=True)
class DistortionStats:
    """Aggregates of graph distance / Euclidean distance over vertex pairs.

    ``pct_le_2`` is the share of pairs stretched by at most 2; ``pct_le_2x_avg``
    the share stretched by at most twice the average.
    """

    avg: float
    max: float
    pct_le_2: float
    pct_le_2x_avg: float
    pairs: int

    def as_row(self) -> dict:
        return {
            "pairs": self.pairs,
            "avg": self.avg,
            "max": self.max,
            "pct_le_2": self.pct_le_2,
            "pct_le_2x_avg": self.pct_le_2x_avg,
        }


def pair_ratios(g: NNGraph, ps: PointSet, vertices, sample_pairs: int | None = None, seed: int = 0):
    """Graph/Euclidean ratio for each unordered pair of ``vertices``.

    With ``sample_pairs`` set, that many pairs are drawn uniformly (with
    replacement) instead of enumerating all of them.
    """
    v = np.asarray(vertices, dtype=np.int64)
    if v.size < 2:
        raise PreconditionError(f"need at least 2 vertices, got {v.size}")
    pts = ps.points
    if sample_pairs is None:
        iu, ju = np.triu_indices(v.size, k=1)
        D = multi_source(g, v)[:, v]
        gd = D[iu, ju]
    else:
        rng = make_rng(seed, 7)
        iu = rng.integers(0, v.size, size=sample_pairs)
        ju = rng.integers(0, v.size - 1, size=sample_pairs)
        ju = ju + (ju >= iu)
        src, inv = np.unique(iu, return_inverse=True)
        D = multi_source(g, v[src])
        gd = D[inv, v[ju]]
    a, b = v[iu], v[ju]
    bad = ~np.isfinite(gd)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise PreconditionError(f"vertices {int(a[j])} and {int(b[j])} are in different components")
    eu = np.hypot(pts[a, 0] - pts[b, 0], pts[a, 1] - pts[b, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(eu > 0, gd / eu, 1.0)
    if np.any(ratio < 1 - 1e-9):
        j = int(np.argmin(ratio))
        raise AssertionError(f"graph distance below Euclidean for pair ({a[j]}, {b[j]}): {ratio[j]}")
    return ratio


def distortion_stats(g: NNGraph, ps: PointSet, vertices, sample_pairs: int | None = None,
                     seed: int = 0) -> DistortionStats:
    ratio = pair_ratios(g, ps, vertices, sample_pairs, seed)
    avg = float(ratio.mean())
    return DistortionStats(
        avg=avg,
        max=float(ratio.max()),
        pct_le_2=100.0 * float(np.mean(ratio <= 2.0)),
        pct_le_2x_avg=100.0 * float(np.mean(ratio <= 2.0 * avg)),
        pairs=int(ratio.size),
    )


@dataclass(frozen=True)
class FitResult:
    a_fit: float
    rss: float
    points_used: int
    points: tuple = ()

    def curve(self, k):
        k = np.asarray(k, dtype=float)
        return 1.0 + self.a_fit / k**2

    def as_dict(self) -> dict:
        return {
            "a_fit": self.a_fit,
            "rss": self.rss,
            "points": [{"k": int(k), "avg": float(v)} for k, v in self.points],
        }


def sweep_k_fit(samples) -> FitResult:
    """Least-squares fit of ``avg = 1 + a / k^2`` (closed form)."""
    samples = [(int(k), float(v)) for k, v in samples]
    if not samples:
        raise InvalidParameterError("no samples to fit")
    if len({k for k, _ in samples}) < 2:
        raise InvalidParameterError("need at least two distinct k values")
    k = np.array([s[0] for s in samples], dtype=float)
    y = np.array([s[1] for s in samples])
    inv2 = 1.0 / k**2
    a = math.fsum(((y - 1.0) * inv2).tolist()) / math.fsum((inv2**2).tolist())
    resid = y - (1.0 + a * inv2)
    return FitResult(float(a), float(np.sum(resid**2)), len(samples), tuple(samples))


def inner_window_view(g: NNGraph, ps: PointSet, inner: Window, restrict: bool = True):
    """Graph, points and observed vertices for the inner-window protocol.

    With ``restrict`` (the default) the graph is cut down to the vertices
    inside ``inner`` and the observed set is the largest component of that
    induced subgraph, so paths stay inside the inner box.  Otherwise the
    full graph is kept and the observed set is the full-graph component
    with the most vertices inside ``inner``.  Edges are always those of the
    k-NN graph on the whole sample, so the outer box shields them from
    boundary effects either way.
    """
    if not restrict:
        return g, ps, observation_set(ps, components(g), inner)
    inside = np.flatnonzero(inner.contains(ps.points))
    sub_g = g.subgraph(inside)
    sub_ps = ps.subset(inside)
    return sub_g, sub_ps, observation_set(sub_ps, components(sub_g), inner)
