"""Coupling of the k-NN graph to site percolation on a square lattice of tiles.

A tile is open when it holds at most ``floor(k/2)`` points and each of its
nine regions (see :mod:`knnperc.geometry`) holds at least one.  For two
adjacent open tiles the k-NN graph contains the five-hop chain::

    rep(t) -> x in E_dir(t) -> y in C_dir(t) -> z in C_opp(t') -> x' in E_opp(t') -> rep(t')

so a path of open tiles can be followed ("mimicked") in the graph.  This
module evaluates tiles, labels lattice clusters, builds mimic paths and
checks them against the actual graph.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage, stats

from .errors import CouplingFailure, InvalidParameterError, PreconditionError
from .geometry import (
    C_OF,
    DIRECTIONS,
    E_OF,
    OPPOSITE,
    STEP,
    Region,
    default_classifier,
    estimate_c_tiles,
    reference_point,
)
from .graphmetrics import multi_source
from .nngraph import NNGraph
from .pointproc import PointSet, make_rng


@dataclass(frozen=True)
class TileParams:
    a: float
    k: int
    lam: float = 1.0

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidParameterError(f"a must be positive, got {self.a}")
        if not self.lam > 0:
            raise InvalidParameterError(f"intensity must be positive, got {self.lam}")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidParameterError(f"k must be a positive integer, got {self.k}")

    @property
    def K(self) -> int:
        return int(self.k) // 2

    @property
    def side(self) -> float:
        return 10.0 * self.a


@dataclass(frozen=True)
class TileLattice:
    """Per-tile state, indexed ``[ix, iy]``.

    Tile ``(ix, iy)`` is the half-open square
    ``[x0 + ix*side, x0 + (ix+1)*side) x [y0 + iy*side, y0 + (iy+1)*side)``.
    ``hop[ix, iy, r]`` is the point of region ``r`` nearest the region's
    reference point (``-1`` if the region is empty); ``rep`` is
    ``hop[..., C0]``.
    """

    params: TileParams
    x0: float
    y0: float
    nx: int
    ny: int
    open: np.ndarray
    count: np.ndarray
    region_counts: np.ndarray
    hop: np.ndarray

    @property
    def rep(self) -> np.ndarray:
        return self.hop[..., Region.C0]

    @property
    def side(self) -> float:
        return self.params.side

    @property
    def shape(self):
        return (self.nx, self.ny)

    def open_fraction(self) -> float:
        return float(self.open.mean()) if self.open.size else 0.0

    def center(self, t):
        return (self.x0 + (t[0] + 0.5) * self.side, self.y0 + (t[1] + 0.5) * self.side)

    def area(self) -> float:
        return self.nx * self.ny * self.side**2

    def save_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tx", "ty", "open", "rep_idx", "count"])
            for ix in range(self.nx):
                for iy in range(self.ny):
                    w.writerow([ix, iy, int(self.open[ix, iy]), int(self.rep[ix, iy]), int(self.count[ix, iy])])
        return path


def evaluate_tiles(ps: PointSet, params: TileParams) -> TileLattice:
    """Tile the window from its lower-left corner (partial tiles are trimmed) and test each tile."""
    side = params.side
    w = ps.window
    nx = int(math.floor(w.width / side + 1e-9))
    ny = int(math.floor(w.height / side + 1e-9))
    ntiles = nx * ny
    pts = ps.points
    ix = np.floor((pts[:, 0] - w.xmin) / side).astype(np.int64)
    iy = np.floor((pts[:, 1] - w.ymin) / side).astype(np.int64)
    keep = np.flatnonzero((ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny))
    ix, iy = ix[keep], iy[keep]
    tile = ix * ny + iy
    lx = pts[keep, 0] - (w.xmin + (ix + 0.5) * side)
    ly = pts[keep, 1] - (w.ymin + (iy + 0.5) * side)
    lab = default_classifier().classify(lx, ly, params.a)

    count = np.bincount(tile, minlength=ntiles)
    inreg = lab >= 0
    rc = np.bincount(tile[inreg] * 9 + lab[inreg], minlength=ntiles * 9).reshape(ntiles, 9)
    hop = np.full((ntiles, 9), -1, dtype=np.int64)
    for reg in Region:
        sel = np.flatnonzero(lab == reg)
        if sel.size == 0:
            continue
        rx, ry = reference_point(reg, params.a)
        d = np.hypot(lx[sel] - rx, ly[sel] - ry)
        idx = keep[sel]
        order = np.lexsort((idx, d, tile[sel]))
        t_sorted = tile[sel][order]
        first = np.flatnonzero(np.r_[True, t_sorted[1:] != t_sorted[:-1]])
        hop[t_sorted[first], reg] = idx[order][first]
    is_open = (count <= params.K) & (rc > 0).all(axis=1)
    return TileLattice(
        params=params,
        x0=w.xmin,
        y0=w.ymin,
        nx=nx,
        ny=ny,
        open=is_open.reshape(nx, ny),
        count=count.reshape(nx, ny),
        region_counts=rc.reshape(nx, ny, 9),
        hop=hop.reshape(nx, ny, 9),
    )


@dataclass(frozen=True)
class LatticeClusters:
    label: np.ndarray  # -1 on closed tiles
    sizes: np.ndarray

    @property
    def count(self) -> int:
        return len(self.sizes)

    def largest(self) -> int:
        return int(np.argmax(self.sizes)) if len(self.sizes) else -1


_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def lattice_clusters(lat: TileLattice) -> LatticeClusters:
    """Open clusters under 4-neighbour adjacency."""
    lab, n = ndimage.label(lat.open, structure=_CROSS)
    lab = lab.astype(np.int64) - 1
    sizes = np.bincount(lab[lab >= 0], minlength=n)
    return LatticeClusters(lab, sizes)


def _bfs(open_mask: np.ndarray, src):
    """Hop distances and BFS parents over open tiles from ``src``.

    Neighbours are visited in the fixed order right, top, left, bottom, so
    the tree (and hence every reconstructed path) is deterministic.
    """
    nx, ny = open_mask.shape
    dist = np.full((nx, ny), -1, dtype=np.int64)
    parent = np.full((nx, ny, 2), -1, dtype=np.int64)
    dist[src] = 0
    queue = deque([src])
    steps = [STEP[d] for d in DIRECTIONS]
    while queue:
        cx, cy = queue.popleft()
        for dx, dy in steps:
            x, y = cx + dx, cy + dy
            if 0 <= x < nx and 0 <= y < ny and open_mask[x, y] and dist[x, y] < 0:
                dist[x, y] = dist[cx, cy] + 1
                parent[x, y] = (cx, cy)
                queue.append((x, y))
    return dist, parent


def _trace(parent, src, dst):
    path = [tuple(dst)]
    while path[-1] != tuple(src):
        px, py = parent[path[-1]]
        path.append((int(px), int(py)))
    return path[::-1]


def lattice_path(lat: TileLattice, t1, t2):
    """Shortest open path from ``t1`` to ``t2`` as a list of tiles, or ``None``."""
    t1, t2 = tuple(t1), tuple(t2)
    for t in (t1, t2):
        if not lat.open[t]:
            raise PreconditionError(f"tile {t} is closed")
    dist, parent = _bfs(lat.open, t1)
    if dist[t2] < 0:
        return None
    return _trace(parent, t1, t2)


def _direction(t, u):
    step = (u[0] - t[0], u[1] - t[1])
    for d in DIRECTIONS:
        if STEP[d] == step:
            return d
    raise PreconditionError(f"tiles {t} and {u} are not adjacent")


def hop_chain(lat: TileLattice, t, u) -> list[int]:
    """The six vertices of the hop pattern from ``rep(t)`` to ``rep(u)``."""
    d = _direction(t, u)
    o = OPPOSITE[d]
    return [
        int(lat.hop[t][Region.C0]),
        int(lat.hop[t][E_OF[d]]),
        int(lat.hop[t][C_OF[d]]),
        int(lat.hop[u][C_OF[o]]),
        int(lat.hop[u][E_OF[o]]),
        int(lat.hop[u][Region.C0]),
    ]


@dataclass(frozen=True)
class MimicPath:
    tiles: list
    vertices: list
    length: float


def _chain_length(g: NNGraph, t, u, chain) -> float:
    total = 0.0
    for v, w in zip(chain[:-1], chain[1:]):
        if v < 0 or w < 0 or not g.has_edge(v, w):
            raise CouplingFailure(t, u, (v, w))
        total += g.edge_length(v, w)
    return total


def mimic_path(g: NNGraph, ps: PointSet, lat: TileLattice, t1, t2) -> MimicPath:
    """Graph path between the representatives of ``t1`` and ``t2`` that follows the lattice path.

    Raises :class:`CouplingFailure` naming the tile pair and the missing edge
    if some hop is not an edge of ``g``.
    """
    t1, t2 = tuple(t1), tuple(t2)
    tiles = lattice_path(lat, t1, t2)
    if tiles is None:
        raise PreconditionError(f"tiles {t1} and {t2} are in different open clusters")
    verts = [int(lat.rep[t1])]
    length = 0.0
    for t, u in zip(tiles[:-1], tiles[1:]):
        chain = hop_chain(lat, t, u)
        length += _chain_length(g, t, u, chain)
        verts.extend(chain[1:])
    return MimicPath(tiles, verts, length)


@dataclass
class CouplingReport:
    adjacent_checked: int
    valid_paths: int
    max_hop_ratio: float
    c_tiles_estimate: float
    alpha_hat: float
    open_fraction: float
    rep_pairs: int = 0
    rho_hat: float = float("nan")
    mean_mimic_distortion: float = float("nan")
    mean_optimal_distortion: float = float("nan")
    mimic_below_optimal: int = 0
    fact1_violations: int = 0
    spearman_rho: float = float("nan")
    spearman_p: float = float("nan")
    failures: list = field(default_factory=list)
    pair_table: dict = field(default_factory=dict, repr=False)

    @property
    def valid_fraction(self) -> float:
        return self.valid_paths / self.adjacent_checked if self.adjacent_checked else float("nan")

    def as_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "pair_table"}
        out["valid_fraction"] = self.valid_fraction
        out["failures"] = [
            {"t1": list(f.t1), "t2": list(f.t2), "missing_edge": list(f.missing_edge)} for f in self.failures
        ]
        return out


def _adjacent_open_pairs(lat: TileLattice):
    pairs = []
    for ix in range(lat.nx):
        for iy in range(lat.ny):
            if not lat.open[ix, iy]:
                continue
            if ix + 1 < lat.nx and lat.open[ix + 1, iy]:
                pairs.append(((ix, iy), (ix + 1, iy)))
            if iy + 1 < lat.ny and lat.open[ix, iy + 1]:
                pairs.append(((ix, iy), (ix, iy + 1)))
    return pairs


def decile_trend(distance, value, bins: int = 10):
    """Spearman correlation of per-bin maxima of ``value`` against distance-bin rank.

    Bins are equal-count quantile bins of ``distance``.  The p-value is
    one-sided, for the alternative of a positive (upward) trend.
    """
    distance = np.asarray(distance, float)
    value = np.asarray(value, float)
    order = np.argsort(distance, kind="stable")
    chunks = np.array_split(order, bins)
    maxima = np.array([value[c].max() for c in chunks if c.size])
    res = stats.spearmanr(np.arange(len(maxima)), maxima, alternative="greater")
    return float(res.statistic), float(res.pvalue), maxima


def verify_coupling(g: NNGraph, ps: PointSet, lat: TileLattice, budget: int | None = None,
                    n_sources: int = 10, seed: int = 0) -> CouplingReport:
    """Check the hop chains of adjacent open tiles and measure rep-to-rep distortion.

    Adjacent open pairs are checked in tile-scan order (evenly thinned to
    ``budget`` if given).  Then ``n_sources`` representatives of the largest
    open cluster are drawn, and every other representative of that cluster
    (up to ``budget`` per source) is reached along the BFS lattice path; for
    each pair the mimic length, the Dijkstra distance, the chemical
    (percolated) and plain lattice distances are recorded.
    """
    a = lat.params.a
    pts = ps.points
    all_pairs = _adjacent_open_pairs(lat)
    pairs = all_pairs
    if budget is not None and len(all_pairs) > budget:
        pick = np.unique(np.linspace(0, len(all_pairs) - 1, budget).round().astype(int))
        pairs = [all_pairs[i] for i in pick]

    chosen = set(pairs)
    step_len = {}
    failures = []
    ratios = []
    for t, u in all_pairs:
        chain = hop_chain(lat, t, u)
        try:
            step_len[(t, u)] = step_len[(u, t)] = _chain_length(g, t, u, chain)
        except CouplingFailure as exc:
            step_len[(t, u)] = step_len[(u, t)] = math.nan
            if (t, u) in chosen:
                failures.append(exc)
            continue
        if (t, u) in chosen:
            r0, r1 = chain[0], chain[-1]
            ratios.append(step_len[(t, u)] / math.hypot(*(pts[r0] - pts[r1])))
    report = CouplingReport(
        adjacent_checked=len(pairs),
        valid_paths=len(pairs) - len(failures),
        max_hop_ratio=max(ratios) if ratios else float("nan"),
        c_tiles_estimate=estimate_c_tiles(a),
        alpha_hat=float("nan"),
        open_fraction=lat.open_fraction(),
        failures=failures,
    )

    clusters = lattice_clusters(lat)
    big = clusters.largest()
    if big < 0:
        return report
    members = [tuple(int(c) for c in t) for t in np.argwhere(clusters.label == big)]
    if len(members) < 2:
        return report
    rng = make_rng(seed, 3)
    src_idx = rng.choice(len(members), size=min(n_sources, len(members)), replace=False)
    sources = [members[i] for i in sorted(src_idx)]
    optimal = multi_source(g, [int(lat.rep[s]) for s in sources])

    rows = {k: [] for k in ("euclid", "mimic", "optimal", "chem", "latt")}
    for si, s in enumerate(sources):
        dist, parent = _bfs(lat.open, s)
        targets = [m for m in members if m != s]
        if budget is not None and len(targets) > budget:
            targets = [targets[i] for i in sorted(rng.choice(len(targets), size=budget, replace=False))]
        # mimic length along the BFS tree, accumulated outwards from the source
        mimic = {s: 0.0}
        for t in sorted(members, key=lambda m: dist[m]):
            if t == s:
                continue
            p = tuple(int(c) for c in parent[t])
            mimic[t] = mimic[p] + step_len[(p, t)]
        rs = int(lat.rep[s])
        for t in targets:
            rt = int(lat.rep[t])
            if not math.isfinite(mimic[t]):
                continue
            rows["euclid"].append(math.hypot(*(pts[rs] - pts[rt])))
            rows["mimic"].append(mimic[t])
            rows["optimal"].append(float(optimal[si, rt]))
            rows["chem"].append(int(dist[t]))
            rows["latt"].append(abs(t[0] - s[0]) + abs(t[1] - s[1]))
    table = {k: np.asarray(v) for k, v in rows.items()}
    if table["euclid"].size == 0:
        return report
    distortion = table["mimic"] / table["euclid"]
    report.rep_pairs = int(distortion.size)
    report.alpha_hat = float(distortion.max())
    report.mean_mimic_distortion = float(distortion.mean())
    report.mean_optimal_distortion = float(np.mean(table["optimal"] / table["euclid"]))
    report.mimic_below_optimal = int(np.sum(table["mimic"] < table["optimal"] * (1 - 1e-9)))
    report.rho_hat = float(np.max(table["chem"] / table["latt"]))
    bound = math.sqrt(2.0) * table["euclid"] / (10.0 * a) + 2.0
    report.fact1_violations = int(np.sum(table["latt"] > bound))
    if distortion.size >= 20:
        report.spearman_rho, report.spearman_p, _ = decile_trend(table["euclid"], distortion)
    table["distortion"] = distortion
    report.pair_table = table
    return report


def rep_point_density(lat: TileLattice) -> float:
    """Representatives in the largest open cluster per unit area of the tiled region."""
    clusters = lattice_clusters(lat)
    if clusters.count == 0:
        return 0.0
    return float(clusters.sizes.max()) / lat.area()
