"""End-to-end pipeline: initial re-id, scale alignment, topology, restricted re-id."""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import DistTopoError, InvalidConfig, NoValidFrames, NoValidPairs, ZeroDuration
from .geometry import write_cameras
from .reid import adaptive_windows, candidate_mask, coverage_interval, greedy_assign, similarity_matrix
from .scale import (
    CorrespondenceSet,
    ScaleSolution,
    apply_scales,
    estimate_scale_ratio,
    mean_height,
    propagate_scales,
    scale_report,
    write_correspondences,
)
from .topology import (
    DIST,
    TIME,
    TopologyConfig,
    TopologyGraph,
    build_topology,
    drop_indirect,
    person_speed,
    write_topology,
)
from .tracklets import by_camera

log = logging.getLogger(__name__)

KINDS = {"dist": (DIST,), "time": (TIME,), "both": (DIST, TIME)}


@dataclass
class PipelineConfig:
    sim_threshold: float = 0.7
    match_threshold: float = 0.0
    initial_window_s: float = 120.0
    coverage: float = 0.95
    min_support: int = 20
    bin_width_m: float = 2.0
    support_m: list = field(default_factory=lambda: [-50.0, 200.0])
    bin_width_s: float = 2.0
    support_s: list = field(default_factory=lambda: [-60.0, 300.0])
    height_gate: list = field(default_factory=lambda: [0.25, 4.0])
    drop_indirect: bool = True
    indirect_fraction: float = 0.3
    reference_camera: int | None = None
    topology: str = "both"
    threads: int = 0
    ranges: list = field(default_factory=lambda: [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 50.0, 60.0])
    eval_range_s: float = 20.0
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.sim_threshold <= 1.0:
            raise InvalidConfig("sim_threshold", "must lie in [0, 1]")
        if not 0.0 < self.coverage <= 1.0:
            raise InvalidConfig("coverage", "must lie in (0, 1]")
        if self.min_support < 1:
            raise InvalidConfig("min_support", "must be >= 1")
        if self.bin_width_m <= 0 or self.bin_width_s <= 0:
            raise InvalidConfig("bin_width_m", "bin widths must be positive")
        if self.support_m[1] <= self.support_m[0] or self.support_s[1] <= self.support_s[0]:
            raise InvalidConfig("support_m", "support must be an increasing pair")
        if self.topology not in KINDS:
            raise InvalidConfig("topology", f"expected one of {sorted(KINDS)}")
        if self.initial_window_s < 0:
            raise InvalidConfig("initial_window_s", "must be >= 0")
        if any(r < 0 for r in self.ranges):
            raise InvalidConfig("ranges", "ranges must be >= 0")

    def topology_config(self) -> TopologyConfig:
        return TopologyConfig(self.sim_threshold, self.min_support, self.indirect_fraction, self.bin_width_m,
                              tuple(self.support_m), self.bin_width_s, tuple(self.support_s))

    def n_threads(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


@dataclass
class CameraView:
    """Per-camera arrays indexed by tracklet index."""

    camera_id: int
    tracklets: list
    features: np.ndarray
    first: np.ndarray
    last: np.ndarray
    speeds: np.ndarray
    heights: list

    @classmethod
    def build(cls, camera_id, tracklets, dim):
        n = len(tracklets)
        feats = np.array([t.features.mean(axis=0) for t in tracklets]) if n else np.zeros((0, dim))
        return cls(
            camera_id, tracklets, feats,
            np.array([t.first_time for t in tracklets]),
            np.array([t.last_time for t in tracklets]),
            np.full(n, np.nan), [None] * n,
        )

    def __len__(self):
        return len(self.tracklets)


@dataclass
class PipelineResult:
    config: PipelineConfig
    cams_initial: list
    cams_aligned: list
    views: dict
    initial: list
    scale_estimates: list
    scale_solution: ScaleSolution | None
    g_dist: TopologyGraph
    g_time: TopologyGraph
    final: dict = field(default_factory=dict)  # kind -> list[CorrespondenceSet]
    final_windows: dict = field(default_factory=dict)  # kind -> {(a, b): EdgeWindows}
    timings: dict = field(default_factory=dict)

    def graph(self, kind) -> TopologyGraph:
        return self.g_dist if kind == DIST else self.g_time


@dataclass
class EdgeWindows:
    """Windows for queries in ``a`` heading to ``b`` and vice versa."""

    a: int
    b: int
    center_a: np.ndarray
    lo_a: np.ndarray
    hi_a: np.ndarray
    center_b: np.ndarray
    lo_b: np.ndarray
    hi_b: np.ndarray

    def widths(self) -> np.ndarray:
        return np.concatenate([self.hi_a - self.lo_a, self.hi_b - self.lo_b])

    def stretched(self, factor) -> "EdgeWindows":
        def s(c, lo, hi):
            return c - (c - lo) * factor, c + (hi - c) * factor
        lo_a, hi_a = s(self.center_a, self.lo_a, self.hi_a)
        lo_b, hi_b = s(self.center_b, self.lo_b, self.hi_b)
        return EdgeWindows(self.a, self.b, self.center_a, lo_a, hi_a, self.center_b, lo_b, hi_b)


def _pmap(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def match_views(va: CameraView, vb: CameraView, win: EdgeWindows, threshold) -> CorrespondenceSet:
    if not len(va) or not len(vb):
        return CorrespondenceSet(va.camera_id, vb.camera_id, [])
    mask = candidate_mask(va.first, va.last, vb.first, vb.last, win.lo_a, win.hi_a, win.lo_b, win.hi_b)
    sim = similarity_matrix(va.features, vb.features)
    return CorrespondenceSet(va.camera_id, vb.camera_id, greedy_assign(sim, mask, threshold))


def fixed_edge_windows(va, vb, lo, hi) -> EdgeWindows:
    na, nb = len(va), len(vb)
    c = 0.5 * (lo + hi)
    return EdgeWindows(va.camera_id, vb.camera_id, np.full(na, c), np.full(na, lo), np.full(na, hi),
                       np.full(nb, c), np.full(nb, lo), np.full(nb, hi))


def edge_windows(kind, va, vb, g_dist, g_time, coverage, fallback_s) -> EdgeWindows:
    """Per-query windows on the edge between ``va`` and ``vb``.

    Distance kind: each query gets the distance distribution divided by its
    own speed. Queries without a usable speed fall back to the time-based
    window, or to the broad fixed window when that edge is missing too.
    """
    a, b = va.camera_id, vb.camera_id
    h_time = g_time.edge(a, b)
    if h_time is not None:
        _, t_lo, t_hi = coverage_interval(h_time.edges, h_time.mass, coverage)
        t_c = h_time.mean()
    else:
        t_lo, t_hi, t_c = -fallback_s, fallback_s, 0.0

    def side(view):
        n = len(view)
        if kind == TIME:
            return np.full(n, t_c), np.full(n, t_lo), np.full(n, t_hi)
        c, lo, hi = adaptive_windows(g_dist.edge(a, b), view.speeds, coverage)
        bad = ~np.isfinite(lo)
        c[bad], lo[bad], hi[bad] = t_c, t_lo, t_hi
        return c, lo, hi

    return EdgeWindows(a, b, *side(va), *side(vb))


def restricted_reid(kind, views, g_dist, g_time, coverage, cfg: PipelineConfig, stretch=1.0):
    graph = g_dist if kind == DIST else g_time
    keys = sorted(graph.edges)

    def one(key):
        va, vb = views[key[0]], views[key[1]]
        win = edge_windows(kind, va, vb, g_dist, g_time, coverage, cfg.initial_window_s)
        if stretch != 1.0:
            win = win.stretched(stretch)
        return match_views(va, vb, win, cfg.match_threshold), win

    out = _pmap(one, keys, cfg.n_threads())
    return [c for c, _ in out], {key: w for key, (_, w) in zip(keys, out)}


def mean_width(kind, views, g_dist, g_time, coverage, cfg, queries=None) -> float:
    """Average window width over the queries of every edge of ``kind``.

    ``queries`` optionally restricts to {(a, b): (idx_in_a, idx_in_b)}.
    """
    graph = g_dist if kind == DIST else g_time
    widths = []
    for key in sorted(graph.edges):
        win = edge_windows(kind, views[key[0]], views[key[1]], g_dist, g_time, coverage, cfg.initial_window_s)
        if queries is None:
            widths.append(win.widths())
        elif key in queries:
            ia, ib = queries[key]
            widths.append(np.concatenate([(win.hi_a - win.lo_a)[ia], (win.hi_b - win.lo_b)[ib]]))
    w = np.concatenate(widths) if widths else np.zeros(0)
    return float(w.mean()) if w.size else 0.0


def coverage_for_range(kind, views, g_dist, g_time, target, cfg, queries=None, iters=50):
    """Coverage (and extra stretch) whose mean window width equals ``target``.

    Bisection on coverage; if even full coverage is narrower than the target
    the windows are stretched about their centers by the missing factor.
    """
    full = mean_width(kind, views, g_dist, g_time, 1.0, cfg, queries)
    if full <= 0:
        return 1.0, 1.0
    if full < target:
        return 1.0, target / full
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mean_width(kind, views, g_dist, g_time, mid, cfg, queries) < target:
            lo = mid
        else:
            hi = mid
    w_lo = mean_width(kind, views, g_dist, g_time, lo, cfg, queries)
    w_hi = mean_width(kind, views, g_dist, g_time, hi, cfg, queries)
    if abs(w_hi - target) <= 1e-6 * max(target, 1.0):
        return hi, 1.0
    # empty bins make width jump with coverage; stretch the narrower side up to the target
    if w_lo > 0:
        return lo, target / w_lo
    return hi, 1.0


def _stage(name, timings):
    class _Ctx:
        def __enter__(self):
            self.t0 = time.perf_counter()

        def __exit__(self, exc_type, exc, tb):
            timings[name] = time.perf_counter() - self.t0
            if isinstance(exc, DistTopoError) and exc.stage is None:
                exc.with_stage(name)
            return False

    return _Ctx()


def build_views(tracklets, cams) -> dict:
    """{camera: CameraView}; every camera gets a view, possibly empty."""
    cam_ids = sorted(c.camera_id for c in cams)
    groups = by_camera(tracklets)
    unknown = set(groups) - set(cam_ids)
    if unknown:
        raise InvalidConfig("cameras", f"tracklets reference unknown camera(s) {sorted(unknown)}").with_stage("ingest")
    dim = next((t.features.shape[1] for t in tracklets), 0)
    return {cid: CameraView.build(cid, groups.get(cid, []), dim) for cid in cam_ids}


def initial_reid(views, cfg: PipelineConfig) -> list:
    """Appearance matching of every camera pair under a broad fixed window."""
    w = cfg.initial_window_s
    pairs = list(combinations(sorted(views), 2))
    return _pmap(
        lambda p: match_views(views[p[0]], views[p[1]], fixed_edge_windows(views[p[0]], views[p[1]], -w, w),
                              cfg.match_threshold),
        pairs, cfg.n_threads(),
    )


def align_scales(views, cams, initial, cfg: PipelineConfig):
    """Returns (estimates, solution or None, aligned cameras)."""
    cam_by_id = {c.camera_id: c for c in cams}
    low, high = cfg.height_gate
    for cid, view in views.items():
        for i, tr in enumerate(view.tracklets):
            try:
                view.heights[i] = mean_height(tr, cam_by_id[cid], low, high)
            except NoValidFrames:
                view.heights[i] = None
    estimates = []
    for corrs in initial:
        reliable = corrs.reliable(cfg.sim_threshold)
        if not reliable.pairs:
            continue
        try:
            estimates.append(estimate_scale_ratio(reliable, views[corrs.cam_k].heights, views[corrs.cam_l].heights))
        except NoValidPairs:
            continue
    if not estimates:
        log.warning("no reliable height correspondences; camera scales left unchanged")
        return estimates, None, list(cams)
    solution = propagate_scales(estimates, len(cams), cfg.reference_camera, camera_ids=list(cam_by_id))
    for cid in sorted(solution.flagged):
        log.warning("camera %d has no scale link to the reference camera", cid)
    return estimates, solution, apply_scales(cams, solution)


def compute_speeds(views, cams) -> None:
    cam_by_id = {c.camera_id: c for c in cams}
    for cid, view in views.items():
        for i, tr in enumerate(view.tracklets):
            try:
                view.speeds[i] = person_speed(tr, cam_by_id[cid], i).speed
            except ZeroDuration:
                view.speeds[i] = np.nan


def infer_topology(views, aligned, initial, cfg: PipelineConfig):
    """Speeds on the aligned cameras, then both topology graphs."""
    compute_speeds(views, aligned)
    groups = {cid: v.tracklets for cid, v in views.items()}
    speeds = {cid: v.speeds for cid, v in views.items()}
    indirect = []
    direct = initial
    if cfg.drop_indirect:
        direct, stats = drop_indirect(initial, groups, cfg.sim_threshold)
        for (k, l), (n_seen, n_rel) in sorted(stats.items()):
            if n_rel and n_seen / n_rel >= cfg.indirect_fraction:
                indirect.append((k, l))
        log.info("indirect camera pairs: %s", indirect)
    return build_topology(groups, aligned, direct, speeds, cfg.topology_config(), indirect)


def final_reid(views, g_dist, g_time, cfg: PipelineConfig):
    """{kind: correspondences}, {kind: windows} for the configured kinds."""
    final, windows = {}, {}
    for kind in KINDS[cfg.topology]:
        final[kind], windows[kind] = restricted_reid(kind, views, g_dist, g_time, cfg.coverage, cfg)
    return final, windows


def run_pipeline(tracklets, cams, cfg: PipelineConfig = None, out_dir=None) -> PipelineResult:
    cfg = cfg or PipelineConfig()
    cfg.validate()
    timings: dict = {}
    cams = sorted(cams, key=lambda c: c.camera_id)
    views = build_views(tracklets, cams)

    with _stage("initial-reid", timings):
        initial = initial_reid(views, cfg)
    with _stage("scale-align", timings):
        estimates, solution, aligned = align_scales(views, cams, initial, cfg)
    with _stage("topology", timings):
        g_dist, g_time = infer_topology(views, aligned, initial, cfg)
    result = PipelineResult(cfg, cams, aligned, views, initial, estimates, solution, g_dist, g_time, timings=timings)
    with _stage("final-reid", timings):
        result.final, result.final_windows = final_reid(views, g_dist, g_time, cfg)

    if out_dir is not None:
        save_result(result, out_dir)
    return result


# artifact file names
CAMERAS = "cameras.jsonl"
TRACKLETS = "tracklets.jsonl"
TRUTH = "truth.json"
CAMERAS_ALIGNED = "cameras_aligned.jsonl"
CORR_INITIAL = "correspondences_initial.json"
SCALE_REPORT = "scale_report.json"
TOPO = {DIST: "topology_distance.json", TIME: "topology_time.json"}
CORR_FINAL = {DIST: "correspondences_final_distance.json", TIME: "correspondences_final_time.json"}
SPEEDS = "speeds.json"
PIPELINE_CONFIG = "pipeline_config.txt"


def save_result(result: PipelineResult, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    def p(name):
        paths[name] = out / name
        return out / name

    with open(p(PIPELINE_CONFIG), "w") as fh:
        fh.write(cfgmod.dump_kv(result.config))
    write_cameras(p(CAMERAS_ALIGNED), result.cams_aligned)
    write_correspondences(p(CORR_INITIAL), result.initial)
    if result.scale_solution is not None:
        report = scale_report(result.scale_solution, result.scale_estimates, result.cams_aligned)
    else:
        report = {"reference": None, "cameras": [{"id": c.camera_id, "scale": c.scale, "flagged": False}
                                                  for c in result.cams_aligned], "links": [], "cycle_residuals": []}
    with open(p(SCALE_REPORT), "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    with open(p(SPEEDS), "w") as fh:
        json.dump({str(cid): [None if not np.isfinite(s) else float(s) for s in v.speeds]
                   for cid, v in sorted(result.views.items())}, fh)
        fh.write("\n")
    for kind in (DIST, TIME):
        write_topology(p(TOPO[kind]), result.graph(kind))
    for kind, corr in sorted(result.final.items()):
        write_correspondences(p(CORR_FINAL[kind]), corr)
    return paths
