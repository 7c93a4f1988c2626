"""Probability that a tile is open, and the smallest k that beats p_c.

A tile of side ``10a`` is open when it holds at most ``K = floor(k/2)``
points and each of the nine disjoint regions (five discs of area ``pi a^2``,
four E-cells of area ``A_E``) holds at least one.  Counts in disjoint
regions of a Poisson process are independent, so inclusion-exclusion over
the set of empty regions gives the probability exactly::

    P = sum_{S} (-1)^{|S|} exp(-lam |S|) * F(K; lam (100 a^2 - |S|))

where ``|S|`` is the total area of the empty set and ``F`` the Poisson CDF.
Grouping the nine regions into the centre disc, four side discs and four
E-cells leaves a 2 x 5 x 5 sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import GeometryError, InvalidParameterError, NotFoundError
from .geometry import default_classifier, e_region_area
from .pointproc import make_rng

SITE_PC = 0.59
SITE_PC_PRECISE = 0.592746
E_AREA_RESOLUTION = 2000


def poisson_cdf(K: int, mu: float) -> float:
    """``P(N <= K)`` for ``N ~ Poisson(mu)``.

    Terms are formed in log space relative to the largest one and summed
    with ``math.fsum``, which keeps the absolute error near machine
    precision even when ``e^{-mu}`` underflows.
    """
    if not math.isfinite(mu) or mu < 0:
        raise InvalidParameterError(f"mean must be finite and >= 0, got {mu}")
    K = math.floor(K)
    if K < 0:
        return 0.0
    if mu == 0:
        return 1.0
    j = np.arange(K + 1, dtype=np.float64)
    logt = -mu + j * math.log(mu) - gammaln(j + 1.0)
    top = float(logt.max())
    s = math.fsum(np.exp(logt - top).tolist())
    return min(1.0, math.exp(top + math.log(s)))


@dataclass(frozen=True)
class EventProb:
    value: float
    method: str
    ci_halfwidth: float
    a: float
    k: int
    lam: float
    meta: dict = field(default_factory=dict, compare=False)


@lru_cache(maxsize=8)
def unit_e_area(resolution: int = E_AREA_RESOLUTION) -> float:
    """E-cell area at ``a = 1``; areas at other ``a`` scale by ``a^2``."""
    return e_region_area(1.0, resolution)


def e_area_halving_change(resolution: int = E_AREA_RESOLUTION) -> float:
    """Relative change of the unit E-area between ``resolution/2`` and ``resolution``."""
    fine = unit_e_area(resolution)
    coarse = unit_e_area(resolution // 2)
    return abs(fine - coarse) / fine


def region_areas(a: float, resolution: int = E_AREA_RESOLUTION) -> dict:
    return {"C": math.pi * a * a, "E": unit_e_area(resolution) * a * a, "tile": 100.0 * a * a}


def _check_areas(areas: dict):
    c, e, t = areas["C"], areas["E"], areas["tile"]
    if min(c, e) < 0:
        raise GeometryError(f"negative region area in {areas}")
    if 5 * c + 4 * e > t * (1 + 1e-12):
        raise GeometryError(
            f"regions cannot be disjoint inside the tile: 5*{c} + 4*{e} > {t}"
        )


def inclusion_exclusion_terms(a: float, k: int, lam: float = 1.0, areas: dict | None = None) -> np.ndarray:
    """Signed inclusion-exclusion mass grouped by the number of empty regions (0..9)."""
    if not a > 0:
        raise InvalidParameterError(f"a must be positive, got {a}")
    if lam < 0:
        raise InvalidParameterError(f"intensity must be >= 0, got {lam}")
    areas = region_areas(a) if areas is None else areas
    _check_areas(areas)
    K = int(k) // 2
    AC, AE, T = areas["C"], areas["E"], areas["tile"]
    by_size = np.zeros(10)
    for c in (0, 1):
        for j in range(5):
            for e in range(5):
                empty = (c + j) * AC + e * AE
                rest = max(T - empty, 0.0)
                term = math.comb(4, j) * math.comb(4, e) * math.exp(-lam * empty) * poisson_cdf(K, lam * rest)
                by_size[c + j + e] += (-1) ** (c + j + e) * term
    return by_size


def prob_At(a: float, k: int, lam: float = 1.0, areas: dict | None = None) -> EventProb:
    """Exact P(tile open) for tile parameter ``a``, degree ``k`` and intensity ``lam``."""
    terms = inclusion_exclusion_terms(a, k, lam, areas)
    value = math.fsum(terms.tolist())
    value = min(1.0, max(0.0, value))
    return EventProb(value, "analytic", 0.0, float(a), int(k), float(lam))


def prob_At_limit(a: float, lam: float = 1.0, areas: dict | None = None) -> float:
    """P(all nine regions occupied), i.e. the value without the count cap."""
    areas = region_areas(a) if areas is None else areas
    return (1 - math.exp(-lam * areas["C"])) ** 5 * (1 - math.exp(-lam * areas["E"])) ** 4


def mc_prob_At(
    a: float, k: int, lam: float = 1.0, trials: int = 100_000, seed: int = 0, batch: int = 5000
) -> EventProb:
    """Monte Carlo estimate of P(tile open) from independently simulated tiles."""
    if trials < 1000:
        raise InvalidParameterError(f"need at least 1000 trials, got {trials}")
    K = int(k) // 2
    clf = default_classifier()
    rng = make_rng(seed, 1)
    mean = lam * 100.0 * a * a
    hits = 0
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        counts = rng.poisson(mean, size=b) if mean > 0 else np.zeros(b, dtype=np.int64)
        pts = rng.uniform(-5.0 * a, 5.0 * a, size=(int(counts.sum()), 2))
        trial = np.repeat(np.arange(b), counts)
        keep = counts[trial] <= K
        lab = clf.classify(pts[keep, 0], pts[keep, 1], a)
        t = trial[keep]
        good = lab >= 0
        occ = np.bincount(t[good] * 9 + lab[good], minlength=b * 9).reshape(b, 9)
        hits += int(np.count_nonzero((counts <= K) & (occ > 0).all(axis=1)))
        done += b
    p = hits / trials
    return EventProb(p, "monte-carlo", 3.0 * math.sqrt(p * (1 - p) / trials), float(a), int(k), float(lam),
                     meta={"trials": trials, "seed": seed})


def optimize_a(k: int, lam: float = 1.0, a_range=(0.5, 1.5), coarse_step: float = 0.005):
    """Maximise P(tile open) over ``a``: coarse scan then two 10x finer local scans."""
    lo, hi = a_range
    if not (0 < lo < hi):
        raise InvalidParameterError(f"empty or non-positive a range {a_range}")
    grid = np.arange(lo, hi + 0.5 * coarse_step, coarse_step)
    grid = grid[grid <= hi + 1e-12]
    vals = np.array([prob_At(x, k, lam).value for x in grid])
    i = int(np.argmax(vals))
    best_a, best_p = float(grid[i]), float(vals[i])
    step = coarse_step
    for _ in range(2):
        fine = step / 10.0
        local = np.arange(best_a - step, best_a + step + 0.5 * fine, fine)
        local = local[(local >= lo) & (local <= hi)]
        lv = np.array([prob_At(x, k, lam).value for x in local])
        j = int(np.argmax(lv))
        if lv[j] > best_p:
            best_a, best_p = float(local[j]), float(lv[j])
        step = fine
    return best_a, best_p


@dataclass(frozen=True)
class BoundResult:
    k_star: int
    a_star: float
    p_star: float
    threshold: float
    lam: float
    e_area: float
    e_area_resolution: int
    e_area_halving_change: float
    scan: tuple = ()

    def as_dict(self) -> dict:
        return {
            "k_star": self.k_star,
            "a_star": self.a_star,
            "p_star": self.p_star,
            "threshold": self.threshold,
            "lambda": self.lam,
            "e_area": self.e_area,
            "e_area_resolution": self.e_area_resolution,
            "e_area_halving_change": self.e_area_halving_change,
            "scan": [{"k": k, "a_star_k": a, "p_star_k": p} for k, a, p in self.scan],
        }


def min_k(threshold: float = SITE_PC, lam: float = 1.0, k_range=(1, 500), a_range=(0.5, 1.5),
          coarse_step: float = 0.005) -> BoundResult:
    """Smallest ``k`` whose best tile probability exceeds ``threshold``.

    Binary search relies on P being nondecreasing in ``k`` (a larger cap
    only weakens the count constraint); a linear scan of +-3 around the
    candidate confirms the answer.
    """
    if not 0 < threshold < 1:
        raise InvalidParameterError(f"threshold must be in (0, 1), got {threshold}")
    kmin, kmax = int(k_range[0]), int(k_range[1])
    if kmin > kmax:
        raise InvalidParameterError(f"empty k range {k_range}")
    memo = {}

    def best(k):
        if k not in memo:
            memo[k] = optimize_a(k, lam, a_range, coarse_step)
        return memo[k]

    top_a, top_p = best(kmax)
    if not top_p > threshold:
        raise NotFoundError(
            f"no k in [{kmin}, {kmax}] gives P > {threshold}; best P = {top_p:.6f} at k={kmax}, a={top_a:.4f}",
            best=(kmax, top_a, top_p),
        )
    lo, hi = kmin, kmax  # invariant: best(hi) qualifies
    while lo < hi:
        mid = (lo + hi) // 2
        if best(mid)[1] > threshold:
            hi = mid
        else:
            lo = mid + 1
    cand = lo
    window = range(max(kmin, cand - 3), min(kmax, cand + 3) + 1)
    k_star = next(k for k in window if best(k)[1] > threshold)
    a_star, p_star = best(k_star)
    area = unit_e_area()
    return BoundResult(
        k_star=k_star,
        a_star=a_star,
        p_star=p_star,
        threshold=threshold,
        lam=lam,
        e_area=area,
        e_area_resolution=E_AREA_RESOLUTION,
        e_area_halving_change=e_area_halving_change(),
        scan=tuple((k, *memo[k]) for k in sorted(memo)),
    )
