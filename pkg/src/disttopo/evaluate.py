"""Rank-1 accuracy, retrieval-rate curves and distribution statistics."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .pipeline import (
    EdgeWindows,
    PipelineResult,
    coverage_for_range,
    edge_windows,
    fixed_edge_windows,
    restricted_reid,
)
from .topology import DIST, TIME, TopologyGraph


def rank1(corr_sets, views, truth) -> tuple[int, int, float]:
    """TP, T_gt and ``100 * TP / T_gt`` for matched ground-truth transitions."""
    gt = set()
    for a, pid, b, _, _ in truth.pairs:
        gt.add((a, pid, b))
        gt.add((b, pid, a))
    tp = 0
    for c in corr_sets:
        tk, tl = views[c.cam_k].tracklets, views[c.cam_l].tracklets
        for i, j, _ in c.pairs:
            pid = tk[i].person_id
            if pid == tl[j].person_id and (c.cam_k, pid, c.cam_l) in gt:
                tp += 1
    t_gt = len(truth.pairs)
    return tp, t_gt, (100.0 * tp / t_gt if t_gt else 0.0)


def rank1_percent(tp: int, t_gt: int) -> float:
    return 100.0 * tp / t_gt if t_gt else 0.0


@dataclass
class GTQuery:
    src: int
    src_idx: int
    dst: int
    dst_idx: int
    dt: float

    @property
    def link(self):
        return (min(self.src, self.dst), max(self.src, self.dst))


def gt_queries(truth, views) -> list[GTQuery]:
    index = {}
    for cid, v in views.items():
        for i, tr in enumerate(v.tracklets):
            index[(cid, tr.person_id)] = i
    out = []
    for a, pid, b, _, _ in truth.pairs:
        if (a, pid) not in index or (b, pid) not in index:
            continue
        ia, ib = index[(a, pid)], index[(b, pid)]
        dt = views[b].tracklets[ib].first_time - views[a].tracklets[ia].last_time
        out.append(GTQuery(a, ia, b, ib, dt))
    return out


def _query_sides(queries):
    """{link: (indices queried from the low camera, from the high camera)}."""
    sides: dict = {}
    for q in queries:
        lo_side, hi_side = sides.setdefault(q.link, ([], []))
        (lo_side if q.src == q.link[0] else hi_side).append(q.src_idx)
    return {k: (np.array(a, dtype=int), np.array(b, dtype=int)) for k, (a, b) in sides.items()}


def retrieval(queries, windows: dict) -> tuple[float, float, dict]:
    """Retrieval rate for ``windows`` ({link: EdgeWindows}).

    Returns (unweighted mean over ground-truth links, weighted by query
    count, per-link rates). Links without windows retrieve nothing.
    """
    hits: dict = {}
    for q in queries:
        win = windows.get(q.link)
        ok = False
        if win is not None:
            if q.src == win.a:
                ok = win.lo_a[q.src_idx] <= q.dt <= win.hi_a[q.src_idx]
            else:
                ok = win.lo_b[q.src_idx] <= q.dt <= win.hi_b[q.src_idx]
        n, s = hits.get(q.link, (0, 0))
        hits[q.link] = (n + 1, s + int(ok))
    if not hits:
        return 0.0, 0.0, {}
    per_link = {k: 100.0 * s / n for k, (n, s) in sorted(hits.items())}
    total = sum(n for n, _ in hits.values())
    weighted = 100.0 * sum(s for _, s in hits.values()) / total
    return float(np.mean(list(per_link.values()))), weighted, per_link


def windows_at(kind, result: PipelineResult, coverage, stretch=1.0) -> dict:
    graph = result.graph(kind)
    out = {}
    for key in sorted(graph.edges):
        win = edge_windows(kind, result.views[key[0]], result.views[key[1]], result.g_dist, result.g_time,
                           coverage, result.config.initial_window_s)
        out[key] = win.stretched(stretch) if stretch != 1.0 else win
    return out


def mean_width_of(windows: dict, sides=None) -> float:
    widths = []
    for key, win in windows.items():
        if sides is None:
            widths.append(win.widths())
        elif key in sides:
            ia, ib = sides[key]
            widths.append(np.concatenate([(win.hi_a - win.lo_a)[ia], (win.hi_b - win.lo_b)[ib]]))
    w = np.concatenate(widths) if widths else np.zeros(0)
    return float(w.mean()) if w.size else 0.0


def retrieval_curve(kind, result: PipelineResult, truth, ranges) -> list[dict]:
    """Retrieval rate at each target average search range (seconds).

    Coverage is bisected so that the mean window width over the
    ground-truth queries equals the target.
    """
    queries = gt_queries(truth, result.views)
    sides = {k: v for k, v in _query_sides(queries).items() if k in result.graph(kind).edges}
    rows = []
    for target in ranges:
        if not sides:
            rows.append({"range_s": float(target), "rate": 0.0, "weighted": 0.0, "avg_width_s": 0.0, "coverage": 0.0})
            continue
        cov, stretch = coverage_for_range(kind, result.views, result.g_dist, result.g_time, target,
                                          result.config, queries=sides)
        wins = windows_at(kind, result, cov, stretch)
        rate, weighted, _ = retrieval(queries, wins)
        rows.append({"range_s": float(target), "rate": rate, "weighted": weighted,
                     "avg_width_s": mean_width_of(wins, sides), "coverage": cov})
    return rows


def rank1_curve(kind, result: PipelineResult, truth, ranges) -> list[dict]:
    """Rank-1 of topology-restricted re-id at equal average search ranges."""
    rows = []
    for target in ranges:
        graph = result.graph(kind)
        if not graph.edges:
            rows.append({"range_s": float(target), "tp": 0, "t_gt": len(truth.pairs), "rank1": 0.0,
                         "avg_width_s": 0.0})
            continue
        cov, stretch = coverage_for_range(kind, result.views, result.g_dist, result.g_time, target, result.config)
        corr, wins = restricted_reid(kind, result.views, result.g_dist, result.g_time, cov, result.config, stretch)
        tp, t_gt, pct = rank1(corr, result.views, truth)
        rows.append({"range_s": float(target), "tp": tp, "t_gt": t_gt, "rank1": pct,
                     "avg_width_s": mean_width_of(wins)})
    return rows


def fixed_windows(result: PipelineResult, lo, hi, links=None) -> dict:
    links = links if links is not None else sorted(result.g_time.edges)
    return {k: fixed_edge_windows(result.views[k[0]], result.views[k[1]], lo, hi) for k in links}


def distribution_stats(graph: TopologyGraph) -> dict:
    """{(k, l): {"mean", "std", "n_samples"}} over histogram bin centers."""
    return {key: {"mean": h.mean(), "std": h.std(), "n_samples": h.n_samples}
            for key, h in sorted(graph.edges.items())}


def link_stats(g_dist: TopologyGraph, g_time: TopologyGraph) -> list[dict]:
    sd, st = distribution_stats(g_dist), distribution_stats(g_time)
    rows = []
    for key in sorted(set(sd) | set(st)):
        d, t = sd.get(key), st.get(key)
        row = {"k": key[0], "l": key[1]}
        for name, s in (("time", t), ("dist", d)):
            row[f"{name}_mean"] = s["mean"] if s else None
            row[f"{name}_std"] = s["std"] if s else None
            row[f"{name}_cv"] = (s["std"] / abs(s["mean"])) if s and s["mean"] else None
        row["n_samples"] = (d or t)["n_samples"]
        rows.append(row)
    return rows


@dataclass
class EvalReport:
    rank1_percent: float
    tp: int
    t_gt: int
    primary_kind: str
    kinds: list
    rank1_initial: dict = field(default_factory=dict)
    rank1_final: dict = field(default_factory=dict)  # kind -> {tp, t_gt, rank1}
    retrieval_curve: dict = field(default_factory=dict)  # kind -> rows
    rank1_curve: dict = field(default_factory=dict)  # kind -> rows
    per_link_stats: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def evaluate(result: PipelineResult, truth, ranges=None) -> EvalReport:
    ranges = list(result.config.ranges if ranges is None else ranges)
    kinds = [k for k in (DIST, TIME) if k in result.final]
    tp0, t_gt, pct0 = rank1(result.initial, result.views, truth)
    final = {}
    for kind in kinds:
        tp, _, pct = rank1(result.final[kind], result.views, truth)
        final[kind] = {"tp": tp, "t_gt": t_gt, "rank1": pct}
    primary = kinds[0] if kinds else DIST
    head = final.get(primary, {"tp": 0, "rank1": 0.0})
    return EvalReport(
        rank1_percent=head["rank1"],
        tp=head["tp"],
        t_gt=t_gt,
        primary_kind=primary,
        kinds=kinds,
        rank1_initial={"tp": tp0, "t_gt": t_gt, "rank1": pct0},
        rank1_final=final,
        retrieval_curve={k: retrieval_curve(k, result, truth, ranges) for k in kinds},
        rank1_curve={k: rank1_curve(k, result, truth, ranges) for k in kinds},
        per_link_stats=link_stats(result.g_dist, result.g_time),
    )


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_report(report: EvalReport, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in
             ("retrieval_curve.csv", "retrieval_diagnostics.csv", "rank1.csv", "link_stats.csv", "report.json")}
    curves = report.retrieval_curve
    ranges = [r["range_s"] for r in next(iter(curves.values()), [])]

    def col(kind, i, key):
        rows = curves.get(kind)
        return rows[i][key] if rows else None

    _write_csv(paths["retrieval_curve.csv"], ["range_s", "rate_time", "rate_dist"],
               [[r, col(TIME, i, "rate"), col(DIST, i, "rate")] for i, r in enumerate(ranges)])
    _write_csv(paths["retrieval_diagnostics.csv"],
               ["range_s", "kind", "rate", "rate_weighted", "avg_width_s", "coverage"],
               [[row["range_s"], kind, row["rate"], row["weighted"], row["avg_width_s"], row["coverage"]]
                for kind, rows in sorted(curves.items()) for row in rows])
    r1 = [["initial", "", "", report.rank1_initial["tp"], report.t_gt, report.rank1_initial["rank1"], ""]]
    for kind, v in sorted(report.rank1_final.items()):
        r1.append(["final", kind, "", v["tp"], v["t_gt"], v["rank1"], ""])
    for kind, rows in sorted(report.rank1_curve.items()):
        for row in rows:
            r1.append(["equal_range", kind, row["range_s"], row["tp"], row["t_gt"], row["rank1"], row["avg_width_s"]])
    _write_csv(paths["rank1.csv"], ["setting", "kind", "range_s", "tp", "t_gt", "rank1_percent", "avg_width_s"], r1)
    keys = ["k", "l", "time_mean", "time_std", "time_cv", "dist_mean", "dist_std", "dist_cv", "n_samples"]
    _write_csv(paths["link_stats.csv"], keys, [[row[k] for k in keys] for row in report.per_link_stats])
    with open(paths["report.json"], "w") as fh:
        json.dump(report.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return paths


__all__ = [
    "EdgeWindows",
    "EvalReport",
    "GTQuery",
    "distribution_stats",
    "evaluate",
    "fixed_windows",
    "gt_queries",
    "rank1",
    "rank1_curve",
    "retrieval",
    "retrieval_curve",
    "write_report",
]
