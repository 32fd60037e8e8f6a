"""Speeds, inter-camera distances and the distance/time topology graphs."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoReliablePairs, TooFewFrames, ZeroDuration
from .geometry import CameraModel, back_project_ground

DIST = "distance"
TIME = "time"


@dataclass(frozen=True)
class SpeedEstimate:
    camera_id: int
    index: int
    speed: float


def person_speed(tracklet, cam: CameraModel, index: int = -1) -> SpeedEstimate:
    """Ground path length over elapsed time, from back-projected foot points."""
    if len(tracklet) < 2:
        raise TooFewFrames(f"camera {cam.camera_id}: speed needs at least 2 frames")
    elapsed = tracklet.last_time - tracklet.first_time
    if elapsed < 1e-6:
        raise ZeroDuration(f"camera {cam.camera_id}: tracklet spans {elapsed:g} s")
    ground = back_project_ground(cam, tracklet.foot_px)
    path = np.sqrt((np.diff(ground, axis=0) ** 2).sum(axis=1)).sum()
    return SpeedEstimate(cam.camera_id, index, float(path / elapsed))


def pair_distance(speed_k: float, speed_l: float, dt: float) -> float:
    """Blind-region distance, taking the mean of the two observed speeds."""
    return 0.5 * (speed_k + speed_l) * dt


def travel_order(tr_k, tr_l) -> bool:
    """True when the person was seen in k before l."""
    return (tr_k.first_time + tr_k.last_time) <= (tr_l.first_time + tr_l.last_time)


def transition_time(tr_from, tr_to) -> float:
    return tr_to.first_time - tr_from.last_time


@dataclass
class Histogram:
    """Normalized histogram over distance (m) or transition time (s).

    Samples are measured along the direction of travel; negative values only
    arise when the two views overlap.
    """

    cam_k: int
    cam_l: int
    kind: str
    bin_width: float
    support: tuple
    mass: np.ndarray
    n_samples: int
    n_clamped: int = 0

    @property
    def edges(self) -> np.ndarray:
        return self.support[0] + self.bin_width * np.arange(len(self.mass) + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    def mean(self) -> float:
        return float(np.dot(self.mass, self.centers))

    def std(self) -> float:
        m = self.mean()
        return float(math.sqrt(max(np.dot(self.mass, (self.centers - m) ** 2), 0.0)))

    def mode(self) -> float:
        return float(self.centers[int(np.argmax(self.mass))])

    def reversed(self) -> "Histogram":
        lo, hi = self.support
        return Histogram(self.cam_l, self.cam_k, self.kind, self.bin_width, (-hi, -lo),
                         self.mass[::-1].copy(), self.n_samples, self.n_clamped)

    def to_json(self) -> dict:
        return {
            "k": self.cam_k,
            "l": self.cam_l,
            "kind": self.kind,
            "bin_width": self.bin_width,
            "support": list(self.support),
            "mass": [float(m) for m in self.mass],
            "n_samples": self.n_samples,
            "n_clamped": self.n_clamped,
        }

    @classmethod
    def from_json(cls, rec) -> "Histogram":
        return cls(int(rec["k"]), int(rec["l"]), rec["kind"], float(rec["bin_width"]),
                   tuple(rec["support"]), np.asarray(rec["mass"], dtype=float),
                   int(rec["n_samples"]), int(rec.get("n_clamped", 0)))


# the distance-based edge type
DistanceDistribution = Histogram


def histogram(samples, cam_k, cam_l, kind, bin_width, support) -> Histogram:
    """Bin ``samples``; values outside ``support`` clamp into the edge bins."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise NoReliablePairs(f"cameras {cam_k}-{cam_l}: no samples to histogram")
    lo, hi = support
    n_bins = int(math.ceil((hi - lo) / bin_width - 1e-9))
    idx = np.floor((samples - lo) / bin_width).astype(int)
    clamped = int(np.count_nonzero((idx < 0) | (idx >= n_bins)))
    idx = np.clip(idx, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins).astype(float)
    return Histogram(cam_k, cam_l, kind, float(bin_width), (float(lo), float(lo + n_bins * bin_width)),
                     counts / samples.size, int(samples.size), clamped)


@dataclass
class TopologyConfig:
    sim_threshold: float = 0.7
    min_support: int = 20
    # a pair whose reliable matches are mostly seen elsewhere in between is not a direct link
    indirect_fraction: float = 0.3
    bin_width_m: float = 2.0
    support_m: tuple = (-50.0, 200.0)
    bin_width_s: float = 2.0
    support_s: tuple = (-60.0, 300.0)


@dataclass
class TopologyGraph:
    vertices: list
    kind: str
    edges: dict = field(default_factory=dict)  # (k, l) with k < l -> Histogram
    invalid_links: list = field(default_factory=list)  # (k, l, n_reliable, reason)

    def edge(self, a, b) -> Histogram | None:
        return self.edges.get((min(a, b), max(a, b)))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "vertices": list(self.vertices),
            "edges": [self.edges[key].to_json() for key in sorted(self.edges)],
            "invalid_links": [list(x) for x in self.invalid_links],
        }

    @classmethod
    def from_json(cls, data) -> "TopologyGraph":
        g = cls(list(data["vertices"]), data["kind"])
        for rec in data["edges"]:
            h = Histogram.from_json(rec)
            g.edges[(h.cam_k, h.cam_l)] = h
        g.invalid_links = [tuple(x) for x in data.get("invalid_links", [])]
        return g


def write_topology(path, graph: TopologyGraph) -> None:
    with open(path, "w") as fh:
        json.dump(graph.to_json(), fh)
        fh.write("\n")


def read_topology(path) -> TopologyGraph:
    with open(path) as fh:
        return TopologyGraph.from_json(json.load(fh))


def link_samples(corrs, tracks_k, tracks_l, speeds_k, speeds_l):
    """Signed (distance, transition time) samples for one camera pair."""
    dists, times = [], []
    for i, j, _ in corrs.pairs:
        tk, tl = tracks_k[i], tracks_l[j]
        dt = transition_time(tk, tl) if travel_order(tk, tl) else transition_time(tl, tk)
        times.append(dt)
        dists.append(pair_distance(speeds_k[i], speeds_l[j], dt))
    return np.asarray(dists), np.asarray(times)


def drop_indirect(corr_sets, groups, threshold: float = 0.7):
    """Remove correspondences explained by a sighting in a third camera.

    A match (k, i) - (m, j) is treated as indirect when some tracklet x of a
    third camera, whose time span lies strictly between the two, is either
    matched to both ends, or reliably matched (similarity above
    ``threshold``) to at least one of them: the person was seen in between.
    Returns the filtered sets and, per camera pair (k, l), the counts
    (reliable pairs with in-between evidence, reliable pairs).
    """
    matched: dict = {}
    reliable: dict = {}
    for c in corr_sets:
        for i, j, s in c.pairs:
            matched.setdefault((c.cam_k, i), {})[c.cam_l] = j
            matched.setdefault((c.cam_l, j), {})[c.cam_k] = i
            if s > threshold:
                reliable.setdefault((c.cam_k, i), {})[c.cam_l] = j
                reliable.setdefault((c.cam_l, j), {})[c.cam_k] = i

    def between(cam, x, lo, hi):
        tr = groups[cam][x]
        return lo < tr.first_time and tr.last_time < hi

    out, stats = [], {}
    for c in corr_sets:
        kept, n_rel, n_seen = [], 0, 0
        for i, j, s in c.pairs:
            a, b = (c.cam_k, i), (c.cam_l, j)
            ta, tb = groups[a[0]][i], groups[b[0]][j]
            first, second = (ta, tb) if travel_order(ta, tb) else (tb, ta)
            lo, hi = first.last_time, second.first_time
            ends = (c.cam_k, c.cam_l)
            ma, mb = matched.get(a, {}), matched.get(b, {})
            seen = any(cam not in ends and mb.get(cam) == x and between(cam, x, lo, hi) for cam, x in ma.items())
            if not seen:
                for node in (a, b):
                    if any(cam not in ends and between(cam, x, lo, hi) for cam, x in reliable.get(node, {}).items()):
                        seen = True
                        break
            if s > threshold:
                n_rel += 1
                n_seen += seen
            if not seen:
                kept.append((i, j, s))
        out.append(type(c)(c.cam_k, c.cam_l, kept))
        stats[(c.cam_k, c.cam_l)] = (n_seen, n_rel)
    return out, stats


def build_distance_distribution(corrs, tracks_k, tracks_l, speeds_k, speeds_l,
                                cfg: TopologyConfig = TopologyConfig()) -> Histogram:
    reliable = corrs.reliable(cfg.sim_threshold)
    if not reliable.pairs:
        raise NoReliablePairs(f"cameras {corrs.cam_k}-{corrs.cam_l}: no reliable correspondences")
    d, _ = link_samples(reliable, tracks_k, tracks_l, speeds_k, speeds_l)
    return histogram(d, corrs.cam_k, corrs.cam_l, DIST, cfg.bin_width_m, cfg.support_m)


def build_topology(groups, cams, corr_sets, speeds, cfg: TopologyConfig = TopologyConfig(), indirect=()):
    """Distance-based graph and its time-based twin.

    ``groups`` maps camera -> tracklets, ``speeds`` camera -> array of speeds
    (same indexing). Camera pairs with fewer than ``cfg.min_support`` reliable
    correspondences, or listed in ``indirect``, become invalid links.
    """
    indirect = {(min(k, l), max(k, l)) for k, l in indirect}
    vertices = sorted(c.camera_id for c in cams)
    g_dist = TopologyGraph(vertices, DIST)
    g_time = TopologyGraph(vertices, TIME)
    for corrs in sorted(corr_sets, key=lambda c: (c.cam_k, c.cam_l)):
        if corrs.cam_k == corrs.cam_l:
            continue
        k, l = corrs.cam_k, corrs.cam_l
        reliable = corrs.reliable(cfg.sim_threshold)
        key = (min(k, l), max(k, l))
        reason = "indirect" if key in indirect else "support" if len(reliable) < max(cfg.min_support, 1) else None
        if reason:
            g_dist.invalid_links.append((*key, len(reliable), reason))
            g_time.invalid_links.append((*key, len(reliable), reason))
            continue
        d, t = link_samples(reliable, groups[k], groups[l], speeds[k], speeds[l])
        a, b = min(k, l), max(k, l)
        g_dist.edges[(a, b)] = histogram(d, a, b, DIST, cfg.bin_width_m, cfg.support_m)
        g_time.edges[(a, b)] = histogram(t, a, b, TIME, cfg.bin_width_s, cfg.support_s)
    return g_dist, g_time
