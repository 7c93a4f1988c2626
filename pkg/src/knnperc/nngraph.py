"""Undirected k-nearest-neighbour graphs over planar point sets.

The production path uses a uniform grid index with an expanding block
search; :func:`brute_force_knn_graph` is the exhaustive O(n^2) reference.
Both paths order candidates by ``(squared distance, index)`` computed with
the same arithmetic, so they agree exactly, ties included.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParameterError
from .pointproc import PointSet


def _sqdist(qx, qy, cx, cy):
    dx = qx[:, None] - cx[None, :]
    dy = qy[:, None] - cy[None, :]
    return dx * dx + dy * dy


@dataclass(frozen=True)
class GridIndex:
    """Points bucketed into square cells of side ``cellsize``.

    Cell ``(cx, cy)`` holds the points with
    ``floor((x - x0) / cellsize) == cx`` and likewise for ``y``.  Buckets are
    stored contiguously: ``order[start[c]:start[c + 1]]`` lists the points of
    cell ``c = cx * ncy + cy`` in ascending index order.
    """

    cellsize: float
    x0: float
    y0: float
    ncx: int
    ncy: int
    order: np.ndarray
    start: np.ndarray

    def cell_of(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        cx = np.floor((pts[:, 0] - self.x0) / self.cellsize).astype(np.int64)
        cy = np.floor((pts[:, 1] - self.y0) / self.cellsize).astype(np.int64)
        return cx, cy

    def bucket(self, cx: int, cy: int) -> np.ndarray:
        if not (0 <= cx < self.ncx and 0 <= cy < self.ncy):
            return self.order[:0]
        c = cx * self.ncy + cy
        return self.order[self.start[c] : self.start[c + 1]]

    def buckets(self) -> dict:
        """Non-empty buckets as ``{(cx, cy): indices}``."""
        counts = np.diff(self.start)
        out = {}
        for c in np.flatnonzero(counts):
            out[(int(c // self.ncy), int(c % self.ncy))] = self.order[self.start[c] : self.start[c + 1]]
        return out

    def gather(self, cx0: int, cx1: int, cy0: int, cy1: int) -> np.ndarray:
        """Indices of all points in the cell block ``[cx0, cx1] x [cy0, cy1]``, sorted."""
        base = np.arange(cx0, cx1 + 1) * self.ncy
        lo = self.start[base + cy0]
        hi = self.start[base + cy1 + 1]
        parts = [self.order[a:b] for a, b in zip(lo, hi) if b > a]
        if not parts:
            return self.order[:0]
        return np.sort(np.concatenate(parts))


def build_index(ps: PointSet, cellsize: float | None = None) -> GridIndex:
    """Bucket ``ps`` into a grid; default cell side gives about one point per cell."""
    n = len(ps)
    if cellsize is None:
        cellsize = math.sqrt(ps.window.area / max(n, 1))
    if not (cellsize > 0 and math.isfinite(cellsize)):
        raise InvalidParameterError(f"cellsize must be positive, got {cellsize}")
    w = ps.window
    ncx = int(math.floor(w.width / cellsize)) + 1
    ncy = int(math.floor(w.height / cellsize)) + 1
    idx = GridIndex(cellsize, w.xmin, w.ymin, ncx, ncy, np.zeros(0, np.int64), np.zeros(1, np.int64))
    cx, cy = idx.cell_of(ps.points)
    np.clip(cx, 0, ncx - 1, out=cx)
    np.clip(cy, 0, ncy - 1, out=cy)
    cell = cx * ncy + cy
    order = np.argsort(cell, kind="stable")
    start = np.zeros(ncx * ncy + 1, dtype=np.int64)
    np.cumsum(np.bincount(cell, minlength=ncx * ncy), out=start[1:])
    return GridIndex(cellsize, w.xmin, w.ymin, ncx, ncy, order, start)


def _search_group(index, xs, ys, queries, k, bx0, bx1, by0, by1, r):
    """kNN for ``queries`` whose cells lie in block ``[bx0,bx1] x [by0,by1]``."""
    out = np.empty((len(queries), k), dtype=np.int64)
    active = np.arange(len(queries))
    h = index.cellsize
    full = (index.ncx - 1, index.ncy - 1)
    while active.size:
        cx0, cx1 = max(bx0 - r, 0), min(bx1 + r, full[0])
        cy0, cy1 = max(by0 - r, 0), min(by1 + r, full[1])
        cand = index.gather(cx0, cx1, cy0, cy1)
        q = queries[active]
        qx, qy = xs[q], ys[q]
        covers_all = cx0 == 0 and cy0 == 0 and (cx1, cy1) == full
        if cand.size - 1 < k and not covers_all:
            r = 2 * r + 1
            continue
        d2 = _sqdist(qx, qy, xs[cand], ys[cand])
        d2[cand[None, :] == q[:, None]] = np.inf
        srt = np.argsort(d2, axis=1, kind="stable")[:, :k]
        kth = np.take_along_axis(d2, srt[:, k - 1 : k], axis=1)[:, 0]
        inf = np.inf
        left = qx - (index.x0 + cx0 * h) if cx0 > 0 else np.full_like(qx, inf)
        right = (index.x0 + (cx1 + 1) * h) - qx if cx1 < full[0] else np.full_like(qx, inf)
        down = qy - (index.y0 + cy0 * h) if cy0 > 0 else np.full_like(qy, inf)
        up = (index.y0 + (cy1 + 1) * h) - qy if cy1 < full[1] else np.full_like(qy, inf)
        clr = np.minimum(np.minimum(left, right), np.minimum(down, up))
        # strict, with a relative guard against rounding at the block edge
        done = kth < clr * clr * (1.0 - 1e-12)
        out[active[done]] = cand[srt[done]]
        active = active[~done]
        r = 2 * r + 1
    return out


def knn_all(index: GridIndex, ps: PointSet, k: int, queries=None) -> np.ndarray:
    """Row ``j`` lists the ``k`` nearest neighbours of point ``queries[j]``.

    Neighbours are ordered by ``(distance, index)`` and exclude the query
    point itself (but not other points at the same location).
    """
    n = len(ps)
    if not (1 <= k <= n - 1):
        raise InvalidParameterError(f"k must satisfy 1 <= k <= n-1 (n={n}), got {k}")
    xs, ys = ps.x, ps.y
    queries = np.arange(n) if queries is None else np.asarray(queries, dtype=np.int64).ravel()
    cx, cy = index.cell_of(ps.points[queries])
    np.clip(cx, 0, index.ncx - 1, out=cx)
    np.clip(cy, 0, index.ncy - 1, out=cy)

    per_cell = max(n * index.cellsize**2 / ps.window.area, 1e-9)
    # group side in cells: about max(k, 32) query points per group
    g = max(1, int(math.ceil(math.sqrt(max(k, 32) / per_cell))))
    r0 = max(1, int(math.ceil(1.2 * math.sqrt((k + 1) / (math.pi * per_cell)))))

    gx, gy = cx // g, cy // g
    key = gx * (index.ncy // g + 1) + gy
    order = np.argsort(key, kind="stable")
    bounds = np.flatnonzero(np.diff(key[order])) + 1
    result = np.empty((len(queries), k), dtype=np.int64)
    for grp in np.split(order, bounds):
        if grp.size == 0:
            continue
        bx0 = int(cx[grp].min())
        bx1 = int(cx[grp].max())
        by0 = int(cy[grp].min())
        by1 = int(cy[grp].max())
        result[grp] = _search_group(index, xs, ys, queries[grp], k, bx0, bx1, by0, by1, r0)
    return result


def knn_query(index: GridIndex, ps: PointSet, i: int, k: int) -> list[int]:
    """The ``k`` nearest neighbours of point ``i``, by ``(distance, index)``."""
    if not (0 <= i < len(ps)):
        raise InvalidParameterError(f"vertex {i} out of range")
    return [int(j) for j in knn_all(index, ps, k, queries=[i])[0]]


@dataclass(frozen=True)
class NNGraph:
    """Undirected k-NN graph in forward-star (CSR) layout.

    Neighbours of ``u`` are ``indices[indptr[u]:indptr[u + 1]]`` in
    ascending order, with Euclidean lengths in ``lengths`` at the same
    positions.
    """

    k: int
    n: int
    indptr: np.ndarray
    indices: np.ndarray
    lengths: np.ndarray

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        j = np.searchsorted(row, v)
        return bool(j < len(row) and row[j] == v)

    def edge_length(self, u: int, v: int) -> float:
        row = self.neighbors(u)
        j = int(np.searchsorted(row, v))
        if j >= len(row) or row[j] != v:
            raise KeyError((u, v))
        return float(self.lengths[self.indptr[u] + j])

    def edges(self):
        """Arrays ``(u, v, length)`` for each undirected edge, ``u < v``."""
        src = np.repeat(np.arange(self.n), self.degree())
        keep = src < self.indices
        return src[keep], self.indices[keep], self.lengths[keep]

    def edge_set(self) -> set:
        u, v, _ = self.edges()
        return set(zip(u.tolist(), v.tolist()))

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.lengths, self.indices, self.indptr), shape=(self.n, self.n))

    def subgraph(self, vertices) -> "NNGraph":
        """Induced subgraph on ``vertices``, relabelled ``0..len(vertices)-1`` in the given order."""
        vertices = np.asarray(vertices, dtype=np.int64)
        sub = self.to_csr()[vertices][:, vertices].tocsr()
        sub.sort_indices()
        return NNGraph(self.k, len(vertices), sub.indptr.astype(np.int64),
                       sub.indices.astype(np.int64), sub.data.astype(np.float64))


def graph_from_pairs(ps: PointSet, k: int, src, dst) -> NNGraph:
    """Undirected union of directed pairs ``src -> dst`` as an :class:`NNGraph`."""
    n = len(ps)
    src = np.asarray(src, dtype=np.int64).ravel()
    dst = np.asarray(dst, dtype=np.int64).ravel()
    u = np.minimum(src, dst)
    v = np.maximum(src, dst)
    keys = np.unique(u * n + v)
    u, v = keys // n, keys % n
    a = np.concatenate([u, v])
    b = np.concatenate([v, u])
    order = np.lexsort((b, a))
    a, b = a[order], b[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(a, minlength=n), out=indptr[1:])
    pts = ps.points
    lengths = np.hypot(pts[a, 0] - pts[b, 0], pts[a, 1] - pts[b, 1])
    return NNGraph(k, n, indptr, b, lengths)


def _check_k(n, k):
    if n < 2:
        raise InvalidParameterError(f"need at least 2 points, got {n}")
    if int(k) != k or not (1 <= k <= n - 1):
        raise InvalidParameterError(f"k must satisfy 1 <= k <= n-1 (n={n}), got {k}")


def build_knn_graph(ps: PointSet, k: int, cellsize: float | None = None) -> NNGraph:
    """Undirected k-NN graph: ``{u, v}`` is an edge iff either is among the other's k nearest."""
    _check_k(len(ps), k)
    k = int(k)
    index = build_index(ps, cellsize)
    nbrs = knn_all(index, ps, k)
    return graph_from_pairs(ps, k, np.repeat(np.arange(len(ps)), k), nbrs)


def brute_force_knn_graph(ps: PointSet, k: int) -> NNGraph:
    """Reference construction by exhaustive distance scan (same tie rule)."""
    _check_k(len(ps), k)
    k = int(k)
    n = len(ps)
    d2 = _sqdist(ps.x, ps.y, ps.x, ps.y)
    np.fill_diagonal(d2, np.inf)
    nbrs = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return graph_from_pairs(ps, k, np.repeat(np.arange(n), k), nbrs)


def save_edges(g: NNGraph, path, seed=None) -> tuple[Path, Path]:
    """Write ``u,v,length`` CSV (``u < v``) and a ``{n, k, seed}`` JSON sidecar."""
    path = Path(path)
    u, v, w = g.edges()
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["u", "v", "length"])
        for row in zip(u.tolist(), v.tolist(), w.tolist()):
            wr.writerow([row[0], row[1], repr(row[2])])
    meta_path = path.with_suffix(path.suffix + ".json")
    meta_path.write_text(json.dumps({"n": g.n, "k": g.k, "seed": seed}, sort_keys=True) + "\n")
    return path, meta_path
