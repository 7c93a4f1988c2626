"""Geometry of a single coupling tile.

Coordinates here are tile-local: the tile is ``[-5a, 5a]^2`` centred at the
origin.  Nine regions are used:

* five closed discs of radius ``a`` centred at ``(0,0)``, ``(±4a,0)``,
  ``(0,±4a)`` (``C0, Cl, Cr, Ct, Cb``);
* four E-cells ``El, Er, Et, Eb``.

The *lens* ``L_r`` is the set of points lying inside every disc centred at a
point ``p`` of ``C0 ∪ Cr`` whose radius is the distance from ``p`` to the
boundary of the 20a x 10a rectangle formed by the tile and its right
neighbour.  The margin ``r_max(p) - |q - p|`` is concave in ``p``, so its
minimum over a disc is attained on the boundary circle and scanning the two
boundary circles is exact up to angular discretisation.

The literal lenses overlap ``C0`` and each other along the diagonals, so the
counted region ``Er`` is the part of ``L_r`` in the open wedge ``|y| < x``
with ``C0`` and ``Cr`` removed.  That keeps the nine regions disjoint (so
their counts are independent under a Poisson process) while every point of
``Er`` still lies in ``L_r``, which is all the path construction needs.
"""

from __future__ import annotations

import math
from enum import IntEnum
from functools import lru_cache

import numpy as np

from .errors import InvalidParameterError

N_ANGLES = 4096
MARGIN_TOL = -1e-12


class Region(IntEnum):
    C0 = 0
    Cl = 1
    Cr = 2
    Ct = 3
    Cb = 4
    El = 5
    Er = 6
    Et = 7
    Eb = 8


DIRECTIONS = ("r", "t", "l", "b")
STEP = {"r": (1, 0), "t": (0, 1), "l": (-1, 0), "b": (0, -1)}
OPPOSITE = {"r": "l", "l": "r", "t": "b", "b": "t"}
C_OF = {"r": Region.Cr, "t": Region.Ct, "l": Region.Cl, "b": Region.Cb}
E_OF = {"r": Region.Er, "t": Region.Et, "l": Region.El, "b": Region.Eb}
DIRECTION_OF = {**{v: k for k, v in C_OF.items()}, **{v: k for k, v in E_OF.items()}}

# disc centres in units of a
DISC_CENTER = {
    Region.C0: (0.0, 0.0),
    Region.Cr: (4.0, 0.0),
    Region.Ct: (0.0, 4.0),
    Region.Cl: (-4.0, 0.0),
    Region.Cb: (0.0, -4.0),
}


def to_right_frame(x, y, direction: str):
    """Rotate tile-local coordinates so that ``direction`` points along +x."""
    if direction == "r":
        return x, y
    if direction == "t":
        return y, -x
    if direction == "l":
        return -x, -y
    if direction == "b":
        return -y, x
    raise InvalidParameterError(f"unknown direction {direction!r}")


def from_right_frame(x, y, direction: str):
    if direction == "r":
        return x, y
    if direction == "t":
        return -y, x
    if direction == "l":
        return -x, -y
    if direction == "b":
        return y, -x
    raise InvalidParameterError(f"unknown direction {direction!r}")


@lru_cache(maxsize=8)
def lens_constraints(n_angles: int = N_ANGLES):
    """Centres and radii of the discs whose intersection is ``L_r`` (a = 1)."""
    th = np.arange(n_angles) * (2.0 * math.pi / n_angles)
    c, s = np.cos(th), np.sin(th)
    px = np.concatenate([c, 4.0 + c])
    py = np.concatenate([s, s])
    r = np.minimum.reduce([px + 5.0, 15.0 - px, 5.0 - py, 5.0 + py])
    for arr in (px, py, r):
        arr.setflags(write=False)
    return px, py, r


def rmax(px, py):
    """Distance from ``p`` to the boundary of ``[-5,15] x [-5,5]`` (a = 1)."""
    px, py = np.asarray(px, float), np.asarray(py, float)
    return np.minimum.reduce([px + 5.0, 15.0 - px, 5.0 - py, 5.0 + py])


def lens_margin(qx, qy, n_angles: int = N_ANGLES, chunk: int = 2048):
    """Minimum over the boundary scan of ``r_max(p) - |q - p|`` (a = 1)."""
    qx = np.atleast_1d(np.asarray(qx, float))
    qy = np.atleast_1d(np.asarray(qy, float))
    px, py, r = lens_constraints(n_angles)
    out = np.empty(qx.shape)
    for s in range(0, qx.size, chunk):
        dx = qx[s : s + chunk, None] - px[None, :]
        dy = qy[s : s + chunk, None] - py[None, :]
        out[s : s + chunk] = np.min(r[None, :] - np.hypot(dx, dy), axis=1)
    return out


def lens_chords(y, n_angles: int = N_ANGLES):
    """For each height ``y``, the x-interval ``[lo, hi]`` of ``L_r`` (a = 1).

    Empty rows come back with ``lo > hi``.  The lens is an intersection of
    discs, hence convex, so each row is a single interval.
    """
    y = np.atleast_1d(np.asarray(y, float))
    px, py, r = lens_constraints(n_angles)
    lo = np.empty(y.shape)
    hi = np.empty(y.shape)
    for s in range(0, y.size, 512):
        h2 = r[None, :] ** 2 - (y[s : s + 512, None] - py[None, :]) ** 2
        bad = np.any(h2 < 0, axis=1)
        h = np.sqrt(np.maximum(h2, 0.0))
        lo[s : s + 512] = np.where(bad, np.inf, np.max(px - h, axis=1))
        hi[s : s + 512] = np.where(bad, -np.inf, np.min(px + h, axis=1))
    return lo, hi


def _cell_mask_right(x, y, in_lens):
    """Trim a right-frame lens mask to the counted cell ``Er`` (a = 1)."""
    return (
        in_lens
        & (np.abs(y) < x)
        & (x * x + y * y > 1.0)
        & ((x - 4.0) ** 2 + y * y > 1.0)
    )


def region_membership(q, region, a: float, n_angles: int = N_ANGLES) -> bool:
    """Whether tile-local point ``q`` lies in ``region`` for tile parameter ``a``."""
    if not a > 0:
        raise InvalidParameterError(f"a must be positive, got {a}")
    try:
        region = Region(region) if not isinstance(region, str) else Region[region]
    except (KeyError, ValueError):
        raise InvalidParameterError(f"unknown region {region!r}") from None
    x, y = q[0] / a, q[1] / a
    if region in DISC_CENTER:
        cx, cy = DISC_CENTER[region]
        return bool((x - cx) ** 2 + (y - cy) ** 2 <= 1.0)
    xr, yr = to_right_frame(x, y, DIRECTION_OF[region])
    inside = lens_margin(xr, yr, n_angles)[0] >= MARGIN_TOL
    return bool(_cell_mask_right(np.array([xr]), np.array([yr]), np.array([inside]))[0])


def in_lens(q, a: float, direction: str = "r", n_angles: int = N_ANGLES) -> bool:
    """Membership in the untrimmed lens ``L_direction``."""
    xr, yr = to_right_frame(q[0] / a, q[1] / a, direction)
    return bool(lens_margin(xr, yr, n_angles)[0] >= MARGIN_TOL)


def _lens_bbox(n_angles: int):
    ys = np.linspace(-3.0, 3.0, 6001)
    lo, hi = lens_chords(ys, n_angles)
    ok = lo <= hi
    pad = 2 * (ys[1] - ys[0])
    return (
        float(lo[ok].min()) - pad,
        float(hi[ok].max()) + pad,
        float(ys[ok].min()) - pad,
        float(ys[ok].max()) + pad,
    )


@lru_cache(maxsize=32)
def _cell_grid(resolution: int, n_angles: int, region: Region):
    """Cell-centre grid over the bounding box of ``region`` and its membership mask (a = 1)."""
    if resolution < 100:
        raise InvalidParameterError(f"resolution must be >= 100, got {resolution}")
    x0, x1, y0, y1 = _lens_bbox(n_angles)
    direction = DIRECTION_OF[region]
    # bounding box in the region's own frame
    corners = [from_right_frame(cx, cy, direction) for cx in (x0, x1) for cy in (y0, y1)]
    bx0 = min(c[0] for c in corners)
    bx1 = max(c[0] for c in corners)
    by0 = min(c[1] for c in corners)
    by1 = max(c[1] for c in corners)
    dx = (bx1 - bx0) / resolution
    dy = (by1 - by0) / resolution
    gx = bx0 + (np.arange(resolution) + 0.5) * dx
    gy = by0 + (np.arange(resolution) + 0.5) * dy
    X, Y = np.meshgrid(gx, gy, indexing="xy")
    XR, YR = to_right_frame(X, Y, direction)
    # the right-frame height is constant along rows or columns; evaluate chords once per value
    yvals, inv = np.unique(YR, return_inverse=True)
    lo, hi = lens_chords(yvals, n_angles)
    inv = inv.reshape(XR.shape)
    inside = (lo[inv] <= XR) & (XR <= hi[inv])
    mask = _cell_mask_right(XR, YR, inside)
    return X, Y, mask, dx * dy


def e_region_area(a: float, resolution: int = 2000, region=Region.Er, n_angles: int = N_ANGLES) -> float:
    """Area of an E-cell by midpoint grid integration over its bounding box."""
    region = Region(region) if not isinstance(region, str) else Region[region]
    if region in DISC_CENTER:
        raise InvalidParameterError("e_region_area applies to E regions only")
    _, _, mask, cell = _cell_grid(int(resolution), n_angles, region)
    return float(mask.sum()) * cell * a * a


def e_region_centroid(a: float, region=Region.Er, resolution: int = 1000, n_angles: int = N_ANGLES):
    region = Region(region) if not isinstance(region, str) else Region[region]
    X, Y, mask, _ = _cell_grid(int(resolution), n_angles, region)
    return float(X[mask].mean()) * a, float(Y[mask].mean()) * a


def e_region_bbox(a: float, region=Region.Er, resolution: int = 1000, n_angles: int = N_ANGLES):
    """``(xmin, xmax, ymin, ymax)`` of an E-cell from the membership scan, padded by one grid step."""
    region = Region(region) if not isinstance(region, str) else Region[region]
    X, Y, mask, _ = _cell_grid(int(resolution), n_angles, region)
    sx = X[0, 1] - X[0, 0]
    sy = Y[1, 0] - Y[0, 0]
    return (
        (float(X[mask].min()) - sx) * a,
        (float(X[mask].max()) + sx) * a,
        (float(Y[mask].min()) - sy) * a,
        (float(Y[mask].max()) + sy) * a,
    )


def reference_point(region, a: float):
    """Nominal centre used for hop-point selection: disc centre or E-cell centroid."""
    region = Region(region) if not isinstance(region, str) else Region[region]
    if region in DISC_CENTER:
        cx, cy = DISC_CENTER[region]
        return cx * a, cy * a
    return e_region_centroid(a, region)


class RegionClassifier:
    """Vectorised region labelling of tile-local points.

    Lens membership uses chord tables on a fine row grid.  Because the lower
    chord end is convex in ``y`` and the upper end concave, linear
    interpolation gives an inner approximation; points inside it are
    accepted directly.  Points clearly outside (by more than ``band``) are
    rejected, and the thin band in between is settled with the exact
    boundary scan, so labels agree with :func:`region_membership`.
    """

    def __init__(self, n_angles: int = N_ANGLES, rows: int = 16384):
        self.n_angles = n_angles
        self.ys = np.linspace(-3.0, 3.0, rows + 1)
        self.lo, self.hi = lens_chords(self.ys, n_angles)
        step = self.ys[1] - self.ys[0]
        # chord-end slopes are bounded by ~1.6 on |y| <= 3, so the
        # interpolation error of a convex kink is below 0.8 * step
        self.band = 2.0 * step
        finite = np.isfinite(self.lo)
        self._lo = np.where(finite, self.lo, 1e9)
        self._hi = np.where(np.isfinite(self.hi), self.hi, -1e9)

    def lens_mask(self, x, y):
        """Membership in ``L_r`` for right-frame unit coordinates."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        out = np.zeros(x.shape, dtype=bool)
        inrange = np.abs(y) <= 3.0
        lo = np.interp(y, self.ys, self._lo)
        hi = np.interp(y, self.ys, self._hi)
        sure_in = inrange & (lo <= x) & (x <= hi)
        maybe = inrange & ~sure_in & (x >= lo - self.band) & (x <= hi + self.band)
        out[sure_in] = True
        if maybe.any():
            out[maybe] = lens_margin(x[maybe], y[maybe], self.n_angles) >= MARGIN_TOL
        return out

    def classify(self, x, y, a: float) -> np.ndarray:
        """Region label (0..8) for tile-local points, or -1 if in no region."""
        x = np.asarray(x, float) / a
        y = np.asarray(y, float) / a
        lab = np.full(x.shape, -1, dtype=np.int8)
        for reg, (cx, cy) in DISC_CENTER.items():
            lab[(x - cx) ** 2 + (y - cy) ** 2 <= 1.0] = reg
        free = lab < 0
        for d in DIRECTIONS:
            xr, yr = to_right_frame(x, y, d)
            cand = free & (np.abs(yr) < xr) & (xr < 3.5)
            if not cand.any():
                continue
            hit = np.zeros(x.shape, dtype=bool)
            idx = np.flatnonzero(cand)
            hit[idx] = _cell_mask_right(xr[idx], yr[idx], self.lens_mask(xr[idx], yr[idx]))
            lab[hit] = E_OF[d]
        return lab


@lru_cache(maxsize=2)
def default_classifier() -> RegionClassifier:
    return RegionClassifier()


def estimate_c_tiles(a: float = 1.0) -> float:
    """Conservative bound on (mimic path length) / (rep-to-rep distance) for adjacent tiles.

    Each leg of ``rep -> Er -> Cr -> Cl' -> El' -> rep'`` is bounded by the
    largest distance between the two regions, using disc radii and the
    E-cell bounding box; the sum is divided by ``8a``, the smallest
    possible distance between the centre discs of adjacent tiles.  The
    result does not depend on ``a``.
    """
    if not a > 0:
        raise InvalidParameterError(f"a must be positive, got {a}")
    x0, x1, y0, y1 = e_region_bbox(1.0, Region.Er)
    corners = [(x, y) for x in (x0, x1) for y in (y0, y1)]
    leg_c0_e = max(math.hypot(x, y) for x, y in corners) + 1.0
    leg_e_cr = max(math.hypot(x - 4.0, y) for x, y in corners) + 1.0
    leg_cr_cl = 4.0  # (4,0) to (6,0) plus both radii
    return (2 * leg_c0_e + 2 * leg_e_cr + leg_cr_cl) / 8.0
