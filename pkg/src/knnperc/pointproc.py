"""Random planar point sets: homogeneous Poisson and fixed-count (binomial).

All randomness comes from :func:`make_rng`, a Philox counter-based generator
keyed by ``(seed, stream)``.  Two calls with the same key produce the same
stream regardless of what else ran before, which is what makes per-seed
parallel trials reproducible.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError

_U64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Return a Philox generator keyed by ``(seed, stream)``."""
    key = (int(seed) & _U64) | ((int(stream) & _U64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class Window:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        vals = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidParameterError(f"non-finite window bounds {vals}")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise InvalidParameterError(f"degenerate window {vals}")

    @classmethod
    def square(cls, side: float, xmin: float = 0.0, ymin: float = 0.0) -> "Window":
        return cls(xmin, ymin, xmin + side, ymin + side)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return (
            (pts[:, 0] >= self.xmin)
            & (pts[:, 0] <= self.xmax)
            & (pts[:, 1] >= self.ymin)
            & (pts[:, 1] <= self.ymax)
        )

    def centered_subwindow(self, fraction: float) -> "Window":
        """Window with the same center and each side scaled by ``fraction``."""
        if not 0 < fraction <= 1:
            raise InvalidParameterError(f"inner fraction must be in (0, 1], got {fraction}")
        cx = 0.5 * (self.xmin + self.xmax)
        cy = 0.5 * (self.ymin + self.ymax)
        hw = 0.5 * fraction * self.width
        hh = 0.5 * fraction * self.height
        return Window(cx - hw, cy - hh, cx + hw, cy + hh)

    def as_dict(self) -> dict:
        return {"xmin": self.xmin, "ymin": self.ymin, "xmax": self.xmax, "ymax": self.ymax}


@dataclass(frozen=True)
class PointSet:
    """Sampled points plus the metadata needed to regenerate them.

    ``mode`` is ``"poisson"`` (with ``lam`` set) or ``"binomial"`` (with ``n``
    set).  Row ``i`` of ``points`` is the stable identifier of point ``i``.
    """

    points: np.ndarray
    window: Window
    seed: int
    mode: str
    lam: float | None = None
    n: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 2)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    def subset(self, idx) -> "PointSet":
        """Points ``idx`` (renumbered from 0) in the same window."""
        idx = np.asarray(idx, dtype=np.int64)
        return PointSet(self.points[idx], self.window, self.seed, "binomial", n=len(idx),
                        meta={"parent_mode": self.mode})

    def metadata(self) -> dict:
        rec = {"seed": int(self.seed), "mode": self.mode, "window": self.window.as_dict()}
        if self.mode == "poisson":
            rec["lambda"] = self.lam
        else:
            rec["n"] = self.n
        return rec


def from_points(points, window: Window | None = None, seed: int = 0) -> PointSet:
    """Wrap explicit coordinates (crafted fixtures, loaded data) as a PointSet."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if window is None:
        if len(pts) == 0:
            raise InvalidParameterError("cannot infer a window for an empty point set")
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        pad = np.where(hi > lo, 0.0, 1.0)
        window = Window(lo[0], lo[1], hi[0] + pad[0], hi[1] + pad[1])
    if len(pts) and not window.contains(pts).all():
        raise InvalidParameterError("points fall outside the given window")
    return PointSet(pts, window, seed, "binomial", n=len(pts))


def _uniform(window: Window, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random((n, 2))
    pts = np.empty_like(u)
    pts[:, 0] = window.xmin + window.width * u[:, 0]
    pts[:, 1] = window.ymin + window.height * u[:, 1]
    # guard against xmin + width*u rounding up past xmax
    np.minimum(pts[:, 0], window.xmax, out=pts[:, 0])
    np.minimum(pts[:, 1], window.ymax, out=pts[:, 1])
    return pts


def sample_poisson(window: Window, lam: float, seed: int, stream: int = 0) -> PointSet:
    """Homogeneous Poisson process of intensity ``lam`` in ``window``."""
    if not (isinstance(lam, (int, float, np.floating, np.integer)) and math.isfinite(lam)):
        raise InvalidParameterError(f"intensity must be finite, got {lam!r}")
    if lam < 0:
        raise InvalidParameterError(f"intensity must be >= 0, got {lam}")
    rng = make_rng(seed, stream)
    n = int(rng.poisson(lam * window.area)) if lam > 0 else 0
    pts = _uniform(window, n, rng)
    return PointSet(pts, window, seed, "poisson", lam=float(lam))


def sample_binomial(window: Window, n: int, seed: int, stream: int = 0) -> PointSet:
    """Exactly ``n`` i.i.d. uniform points in ``window``."""
    if int(n) != n or n < 0:
        raise InvalidParameterError(f"point count must be a non-negative integer, got {n!r}")
    rng = make_rng(seed, stream)
    pts = _uniform(window, int(n), rng)
    return PointSet(pts, window, seed, "binomial", n=int(n))


def save_pointset(ps: PointSet, path) -> tuple[Path, Path]:
    """Write ``path`` as ``idx,x,y`` CSV and ``path.json`` with the metadata."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["idx", "x", "y"])
        for i, (x, y) in enumerate(ps.points):
            w.writerow([i, repr(float(x)), repr(float(y))])
    meta_path = path.with_suffix(path.suffix + ".json")
    meta_path.write_text(json.dumps(ps.metadata(), indent=2, sort_keys=True) + "\n")
    return path, meta_path


def load_pointset(path) -> PointSet:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    rows.sort(key=lambda r: int(r["idx"]))
    pts = np.array([[float(r["x"]), float(r["y"])] for r in rows]).reshape(-1, 2)
    window = Window(**meta["window"])
    if meta["mode"] == "poisson":
        return PointSet(pts, window, meta["seed"], "poisson", lam=meta["lambda"])
    return PointSet(pts, window, meta["seed"], "binomial", n=meta["n"])
