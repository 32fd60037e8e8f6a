"""Appearance matching and topology-derived search windows."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyTracklet, ZeroSpeed
from .scale import CorrespondenceSet
from .topology import Histogram


@dataclass(frozen=True, eq=False)
class PooledIdentity:
    camera_id: int
    index: int
    feature: np.ndarray
    first_time: float
    last_time: float
    speed: float = float("nan")


def pool_features(tracklet, index: int = -1, speed: float = float("nan")) -> PooledIdentity:
    """Average the per-frame descriptors (no renormalization)."""
    if len(tracklet) == 0:
        raise EmptyTracklet(f"camera {tracklet.camera_id}: tracklet has no frames")
    return PooledIdentity(
        tracklet.camera_id, index, tracklet.features.mean(axis=0),
        tracklet.first_time, tracklet.last_time, speed,
    )


def _vec(x):
    return x.feature if isinstance(x, PooledIdentity) else np.asarray(x, dtype=float)


def similarity(a, b) -> float:
    """``exp(-||a - b||)``; 1.0 for identical pooled features."""
    fa, fb = _vec(a), _vec(b)
    if fa.shape != fb.shape:
        raise DimensionMismatch(f"feature shapes {fa.shape} and {fb.shape} differ")
    return float(math.exp(-np.linalg.norm(fa - fb)))


def similarity_matrix(A, B) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.size and B.size and A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"feature dims {A.shape[1]} and {B.shape[1]} differ")
    if A.size == 0 or B.size == 0:
        return np.zeros((len(A) if A.size else 0, len(B) if B.size else 0))
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-np.sqrt(np.maximum(d2, 0.0)))


@dataclass(frozen=True)
class SearchWindow:
    """Transition-time window [lo_s, hi_s] for a query leaving ``cam_from``."""

    cam_from: int | None
    cam_to: int | None
    center_s: float
    half_width_s: float
    lo_s: float
    hi_s: float

    def __post_init__(self):
        if self.half_width_s < 0:
            raise ValueError("half_width_s must be >= 0")

    @property
    def width(self) -> float:
        return self.hi_s - self.lo_s

    def contains(self, dt) -> bool:
        return self.lo_s <= dt <= self.hi_s

    @classmethod
    def fixed(cls, lo, hi, cam_from=None, cam_to=None) -> "SearchWindow":
        return cls(cam_from, cam_to, 0.5 * (lo + hi), 0.5 * (hi - lo), lo, hi)


def enclosed_mass(edges, mass, lo, hi) -> float:
    """Mass inside [lo, hi], treating each bin as uniform."""
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    return float(np.interp(hi, edges, cdf) - np.interp(lo, edges, cdf))


def coverage_interval(edges, mass, coverage: float):
    """Smallest window around the histogram mean enclosing ``coverage`` mass.

    The window grows by the same amount on both sides of the mean and is
    clipped to the histogram support, so once one side runs out of bins all
    further mass comes from the other. Mass inside a bin is spread uniformly,
    which makes the enclosed mass piecewise linear in the half-width; the
    exact crossing is solved on that piecewise-linear curve.

    Returns ``(center, lo, hi)``.
    """
    edges = np.asarray(edges, dtype=float)
    mass = np.asarray(mass, dtype=float)
    total = float(mass.sum())
    centers = 0.5 * (edges[:-1] + edges[1:])
    c = float(np.dot(mass, centers) / total) if total > 0 else float(centers.mean())
    a, b = edges[0], edges[-1]
    target = min(max(coverage, 0.0), total)
    if target <= 0.0:
        return c, c, c
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    h = np.unique(np.concatenate([[0.0], np.abs(edges - c)]))
    lo = np.maximum(c - h, a)
    hi = np.minimum(c + h, b)
    enc = np.interp(hi, edges, cdf) - np.interp(lo, edges, cdf)
    p = int(np.searchsorted(enc, target, side="left"))
    if p >= len(h):
        p = len(h) - 1
    if p == 0:
        half = 0.0
    else:
        gain = enc[p] - enc[p - 1]
        frac = (target - enc[p - 1]) / gain if gain > 0 else 1.0
        half = h[p - 1] + min(max(frac, 0.0), 1.0) * (h[p] - h[p - 1])
        # rounding may leave the interpolated point a hair short of the target
        if enclosed_mass(edges, mass, max(c - half, a), min(c + half, b)) < target - 1e-12:
            half = h[p]
    return c, max(c - half, a), min(c + half, b)


def adaptive_window(dist: Histogram, speed: float, coverage: float = 0.95) -> SearchWindow:
    """Person-specific transition-time window from a distance distribution.

    Dividing the bin edges by the person's speed turns the distance
    histogram into a transition-time histogram with the same per-bin mass.
    """
    if not speed > 0 or not math.isfinite(speed):
        raise ZeroSpeed(f"speed {speed!r} gives no transition-time distribution")
    if dist.n_samples <= 0:
        raise ValueError("distribution has no samples")
    c, lo, hi = coverage_interval(dist.edges / speed, dist.mass, coverage)
    return SearchWindow(dist.cam_k, dist.cam_l, c, 0.5 * (hi - lo), lo, hi)


def adaptive_windows(dist: Histogram, speeds, coverage: float = 0.95):
    """Vectorized ``adaptive_window`` over many speeds.

    The time-domain window is the distance-domain window divided by speed,
    so the distance interval is solved once. Returns ``(center, lo, hi)``
    arrays; entries for non-positive speeds are NaN.
    """
    speeds = np.asarray(speeds, dtype=float)
    c, lo, hi = coverage_interval(dist.edges, dist.mass, coverage)
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = speeds > 0
        inv = np.where(ok, 1.0 / np.where(ok, speeds, 1.0), np.nan)
    return c * inv, lo * inv, hi * inv


def time_window(hist: Histogram, coverage: float = 0.95) -> SearchWindow:
    """Global window from a transition-time histogram (time-based topology)."""
    c, lo, hi = coverage_interval(hist.edges, hist.mass, coverage)
    return SearchWindow(hist.cam_k, hist.cam_l, c, 0.5 * (hi - lo), lo, hi)


def candidate_mask(first_q, last_q, first_g, last_g, fwd_lo, fwd_hi, rev_lo=None, rev_hi=None) -> np.ndarray:
    """(n_q, n_g) mask of gallery items inside the query windows.

    Forward: query left its camera first, gallery entry time minus query exit
    time must fall in the query's window. Reverse (optional): the gallery
    identity left first and the query must fall in the gallery's window.
    """
    dt = np.asarray(first_g)[None, :] - np.asarray(last_q)[:, None]
    lo = np.asarray(fwd_lo, dtype=float)[:, None]
    hi = np.asarray(fwd_hi, dtype=float)[:, None]
    mask = (dt >= lo) & (dt <= hi)
    if rev_lo is not None:
        rdt = np.asarray(first_q)[:, None] - np.asarray(last_g)[None, :]
        rlo = np.asarray(rev_lo, dtype=float)[None, :]
        rhi = np.asarray(rev_hi, dtype=float)[None, :]
        mask |= (rdt >= rlo) & (rdt <= rhi)
    return mask


def greedy_assign(sim: np.ndarray, mask: np.ndarray, threshold: float) -> list[tuple[int, int, float]]:
    """One-to-one greedy assignment by descending similarity.

    Ties go to the lower (query, gallery) index pair.
    """
    ii, jj = np.nonzero(mask & (sim >= threshold))
    if ii.size == 0:
        return []
    s = sim[ii, jj]
    order = np.lexsort((jj, ii, -s))
    used_i, used_j, out = set(), set(), []
    for o in order:
        i, j = int(ii[o]), int(jj[o])
        if i in used_i or j in used_j:
            continue
        used_i.add(i)
        used_j.add(j)
        out.append((i, j, float(min(max(s[o], 0.0), 1.0))))
    out.sort()
    return out


def match_pair(queries, gallery, windows, threshold: float = 0.7, reverse_windows=None) -> CorrespondenceSet:
    """Match pooled identities of one camera (queries) against another.

    ``windows[i]`` restricts query i; ``reverse_windows[j]`` (optional) lets
    gallery identity j that left its camera first claim a later query.
    """
    cam_k = queries[0].camera_id if queries else -1
    cam_l = gallery[0].camera_id if gallery else -1
    if not queries or not gallery:
        return CorrespondenceSet(cam_k, cam_l, [])
    fq = np.array([q.first_time for q in queries])
    lq = np.array([q.last_time for q in queries])
    fg = np.array([g.first_time for g in gallery])
    lg = np.array([g.last_time for g in gallery])
    rev = (None, None)
    if reverse_windows is not None:
        rev = ([w.lo_s for w in reverse_windows], [w.hi_s for w in reverse_windows])
    mask = candidate_mask(fq, lq, fg, lg, [w.lo_s for w in windows], [w.hi_s for w in windows], *rev)
    sim = similarity_matrix([q.feature for q in queries], [g.feature for g in gallery])
    pairs = greedy_assign(sim, mask, threshold)
    return CorrespondenceSet(cam_k, cam_l, [(queries[i].index, gallery[j].index, s) for i, j, s in pairs])
