"""Maximin Latin hypercube designs and nested low/high fidelity design pairs."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist


@dataclass(frozen=True)
class Design:
    """Points in the unit hypercube plus the physical box they map to."""

    points: np.ndarray
    bounds: np.ndarray = field(default=None)
    seed: int | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if self.bounds is None:
            bnds = np.tile([0.0, 1.0], (pts.shape[1], 1))
        else:
            bnds = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "bounds", bnds)
        if bnds.shape[0] != pts.shape[1]:
            raise ValueError("one (lo, hi) pair is needed per dimension")
        if np.any(bnds[:, 0] >= bnds[:, 1]):
            raise ValueError("bounds must satisfy lo < hi")
        if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
            raise ValueError("design points must lie in [0, 1]^d")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def physical(self) -> np.ndarray:
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return lo + self.points * (hi - lo)

    def subset(self, idx) -> "Design":
        return Design(self.points[np.asarray(idx)], self.bounds, self.seed)


@dataclass(frozen=True)
class NestedDesignPair:
    """Low and high fidelity designs with ``high.points[j] == low.points[inclusion_map[j]]``."""

    low: Design
    high: Design
    inclusion_map: np.ndarray

    def __post_init__(self):
        imap = np.asarray(self.inclusion_map, dtype=int)
        object.__setattr__(self, "inclusion_map", imap)
        if imap.shape != (self.high.n,):
            raise ValueError("inclusion map must have one entry per high-fidelity point")
        if len(set(imap.tolist())) != imap.size:
            raise ValueError("inclusion map entries must be distinct")
        if not np.array_equal(self.low.points[imap], self.high.points):
            raise ValueError("high-fidelity points are not contained in the low-fidelity design")

    def drop_high(self, k: int) -> "NestedDesignPair":
        """Pair without the ``k``-th high-fidelity point (the low design is untouched)."""
        keep = np.delete(np.arange(self.high.n), k)
        return NestedDesignPair(self.low, self.high.subset(keep), self.inclusion_map[keep])


def min_distance(points) -> float:
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 2:
        return np.inf
    return float(pdist(pts).min())


def _lhs(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    perms = np.column_stack([rng.permutation(n) for _ in range(d)])
    return (perms + rng.random((n, d))) / n


def maximin_lhs(n: int, d: int, seed: int, sweeps: int = 100, bounds=None) -> Design:
    """Latin hypercube design improved by coordinate swaps.

    Each sweep proposes ``n`` random swaps of one coordinate between two
    points; a swap is kept only if it strictly increases the minimum
    pairwise distance, so the LHS property is preserved exactly and the
    maximin criterion never decreases.
    """
    if n < 2:
        raise ValueError("maximin_lhs needs n >= 2")
    if d < 1:
        raise ValueError("d must be positive")
    rng = np.random.default_rng(seed)
    pts = _lhs(n, d, rng)
    best = min_distance(pts)
    for _ in range(sweeps):
        for _ in range(n):
            i, j = rng.choice(n, size=2, replace=False)
            k = rng.integers(d)
            pts[[i, j], k] = pts[[j, i], k]
            cand = min_distance(pts)
            if cand > best:
                best = cand
            else:
                pts[[i, j], k] = pts[[j, i], k]
    return Design(pts, bounds, seed)


def lhs_bins_ok(points) -> bool:
    """True when every one of the ``n`` equal-width bins holds exactly one point per dimension."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    bins = np.minimum(np.floor(pts * n).astype(int), n - 1)
    return all(np.array_equal(np.sort(bins[:, k]), np.arange(n)) for k in range(pts.shape[1]))


def nest_designs(low: Design, high: Design) -> NestedDesignPair:
    """Move the closest low-fidelity points onto the high-fidelity points.

    High points are processed in index order; each claims the nearest
    still-unclaimed low point (Euclidean distance in normalized
    coordinates, lowest index on ties), which is overwritten by the high
    point. All other low points are left unchanged.
    """
    if low.d != high.d:
        raise ValueError(f"dimension mismatch: low d={low.d}, high d={high.d}")
    if high.n > low.n:
        raise ValueError("the high-fidelity design cannot be larger than the low-fidelity one")
    new_low = low.points.copy()
    claimed = np.zeros(low.n, dtype=bool)
    imap = np.empty(high.n, dtype=int)
    for j, x in enumerate(high.points):
        dist = np.linalg.norm(low.points - x, axis=1)
        dist[claimed] = np.inf
        i = int(np.argmin(dist))  # argmin returns the first (lowest) index on ties
        claimed[i] = True
        imap[j] = i
        new_low[i] = x
    return NestedDesignPair(Design(new_low, low.bounds, low.seed), high, imap)


def nested_maximin_designs(
    n_low: int, n_high: int, d: int, seed: int, sweeps: int = 100, bounds=None
) -> NestedDesignPair:
    """Two independent maximin LHS designs made nested with :func:`nest_designs`."""
    ss = np.random.SeedSequence(seed)
    s_low, s_high = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    low = maximin_lhs(n_low, d, s_low, sweeps, bounds)
    high = maximin_lhs(n_high, d, s_high, sweeps, bounds)
    return nest_designs(low, high)


def uniform_test_set(n: int, d: int, seed: int, bounds=None) -> Design:
    rng = np.random.default_rng(seed)
    return Design(rng.random((n, d)), bounds, seed)


def write_design_csv(design: Design, path, bounds_path=None) -> None:
    """Write normalized points (header ``x1,...,xd``) and a JSON sidecar with bounds."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{k + 1}" for k in range(design.d)])
        for row in design.points:
            w.writerow([repr(float(v)) for v in row])
    bounds_path = Path(bounds_path) if bounds_path else path.with_suffix(".json")
    bounds_path.write_text(
        json.dumps({"bounds": design.bounds.tolist(), "seed": design.seed}, indent=2)
    )


def read_design_csv(path, bounds_path=None) -> Design:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    pts = np.array([[float(v) for v in r] for r in body]).reshape(-1, len(header))
    bounds_path = Path(bounds_path) if bounds_path else path.with_suffix(".json")
    bounds, seed = None, None
    if bounds_path.exists():
        meta = json.loads(bounds_path.read_text())
        bounds, seed = meta.get("bounds"), meta.get("seed")
    return Design(pts, bounds, seed)
