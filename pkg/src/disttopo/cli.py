"""Command-line entry point.

Subcommands write their outputs as files so each stage can be re-run alone:

    simulate  -> cameras.jsonl, tracklets.jsonl, truth.json
    align     -> correspondences_initial.json, scale_report.json, cameras_aligned.jsonl
    topology  -> topology_distance.json, topology_time.json, speeds.json
    reid      -> correspondences_final_<kind>.json
    evaluate  -> retrieval_curve.csv, rank1.csv, link_stats.csv, report.json
    pipeline  -> all of the above
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from . import config as cfgmod
from . import pipeline as pl
from .errors import ConfigError, DataError, MissingArtifact, ParseError
from .evaluate import evaluate, write_report
from .geometry import read_cameras, write_cameras
from .scale import read_correspondences, scale_report, write_correspondences
from .sim import WorldConfig, generate_world, read_truth, write_truth
from .topology import DIST, TIME, read_topology, write_topology
from .tracklets import read_tracklets, write_tracklets

log = logging.getLogger("disttopo")

MANIFEST = "manifest.json"
WORLD_CONFIG = "world_config.txt"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4

_WORLD_KEYS = {f.name for f in dataclasses.fields(WorldConfig)}
_PIPE_KEYS = {f.name for f in dataclasses.fields(pl.PipelineConfig)}


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file (world and pipeline keys)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--in", dest="in_dir", help="input directory")
    common.add_argument("--data", help="directory holding tracklets/cameras/truth if not in --in")
    common.add_argument("--threads", type=int, help="worker threads (default: available cores)")
    common.add_argument("--topology", choices=sorted(pl.KINDS))
    common.add_argument("--coverage", type=float)
    common.add_argument("--min-support", type=int)
    common.add_argument("--sim-threshold", type=float)
    common.add_argument("--bin-width-m", type=float)
    common.add_argument("--bin-width-s", type=float)
    common.add_argument("--ranges", type=_floats, help="comma-separated average search ranges in seconds")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="disttopo", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="generate a synthetic world")
    sub.add_parser("align", parents=[common], help="initial re-id and camera scale alignment")
    sub.add_parser("topology", parents=[common], help="estimate distance and time topologies")
    sub.add_parser("reid", parents=[common], help="topology-restricted re-identification")
    sub.add_parser("evaluate", parents=[common], help="rank-1 and retrieval curves from artifacts")
    sub.add_parser("pipeline", parents=[common], help="all stages plus evaluation")
    return ap


def load_configs(args) -> tuple[WorldConfig, pl.PipelineConfig]:
    """Config file values, then command-line flags on top."""
    values = cfgmod.read_kv(args.config) if args.config else {}
    unknown = set(values) - _WORLD_KEYS - _PIPE_KEYS
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
    world = cfgmod.build(WorldConfig, {k: v for k, v in values.items() if k in _WORLD_KEYS})
    pipe = cfgmod.build(pl.PipelineConfig, {k: v for k, v in values.items() if k in _PIPE_KEYS})
    world = cfgmod.override(world, rng_seed=args.seed)
    pipe = cfgmod.override(
        pipe, seed=args.seed, threads=args.threads, topology=args.topology, coverage=args.coverage,
        min_support=args.min_support, sim_threshold=args.sim_threshold, bin_width_m=args.bin_width_m,
        bin_width_s=args.bin_width_s, ranges=args.ranges,
    )
    world.validate()
    pipe.validate()
    return world, pipe


def _out_dir(args) -> Path:
    if not args.out:
        raise ConfigError("--out is required")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _search_dirs(args) -> list[Path]:
    dirs = [Path(d) for d in (args.in_dir, args.data) if d]
    for d in list(dirs):
        man = d / MANIFEST
        if man.exists():
            with open(man) as fh:
                data_dir = json.load(fh).get("data_dir")
            if data_dir:
                dirs.append(Path(data_dir))
    if not dirs:
        raise ConfigError("--in is required")
    return dirs


def _find(name, dirs, stage) -> Path:
    for d in dirs:
        if (d / name).exists():
            return d / name
    raise MissingArtifact(f"{name} not found in {', '.join(str(d) for d in dirs)}").with_stage(stage)


def _read(reader, name, dirs, stage):
    path = _find(name, dirs, stage)
    try:
        return reader(path)
    except (ParseError, OSError) as exc:
        if isinstance(exc, DataError):
            raise exc.with_stage(stage)
        raise MissingArtifact(f"cannot read {path}: {exc}").with_stage(stage) from exc


def _load_views(dirs, cams, stage):
    tracklets, _ = _read(read_tracklets, pl.TRACKLETS, dirs, stage)
    return pl.build_views(tracklets, cams)


def write_manifest(out: Path, command, cfg, seed, timings, paths, data_dir=None) -> Path:
    paths = sorted({str(Path(p).relative_to(out)) for p in paths})
    missing = [p for p in paths if not (out / p).exists()]
    if missing:
        raise RuntimeError(f"manifest references missing artifacts: {missing}")
    man = {
        "tool": "disttopo",
        "version": __version__,
        "command": command,
        "config_hash": cfgmod.config_hash(cfg),
        "seed": seed,
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
        "artifacts": paths,
        "data_dir": str(Path(data_dir).resolve()) if data_dir else None,
    }
    path = out / MANIFEST
    with open(path, "w") as fh:
        json.dump(man, fh, indent=1)
        fh.write("\n")
    return path


def cmd_simulate(args) -> int:
    world, _ = load_configs(args)
    out = _out_dir(args)
    t0 = time.perf_counter()
    cams, tracklets, truth = generate_world(world)
    paths = [out / pl.CAMERAS, out / pl.TRACKLETS, out / pl.TRUTH, out / WORLD_CONFIG]
    write_cameras(paths[0], cams)
    write_tracklets(paths[1], tracklets)
    write_truth(paths[2], truth)
    paths[3].write_text(cfgmod.dump_kv(world))
    write_manifest(out, "simulate", world, world.rng_seed, {"simulate": time.perf_counter() - t0}, paths)
    print(f"wrote {len(cams)} cameras, {len(tracklets)} tracklets, {len(truth.pairs)} true transitions to {out}")
    return EXIT_OK


def cmd_align(args) -> int:
    _, cfg = load_configs(args)
    dirs, out = _search_dirs(args), _out_dir(args)
    timings: dict = {}
    with pl._stage("ingest", timings):
        cams = _read(read_cameras, pl.CAMERAS, dirs, "ingest")
        views = _load_views(dirs, cams, "ingest")
    with pl._stage("initial-reid", timings):
        initial = pl.initial_reid(views, cfg)
    with pl._stage("scale-align", timings):
        estimates, solution, aligned = pl.align_scales(views, cams, initial, cfg)
    paths = [out / pl.CORR_INITIAL, out / pl.CAMERAS_ALIGNED, out / pl.SCALE_REPORT]
    write_correspondences(paths[0], initial)
    write_cameras(paths[1], aligned)
    report = scale_report(solution, estimates, aligned) if solution else {"cameras": [], "links": []}
    with open(paths[2], "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    write_manifest(out, "align", cfg, cfg.seed, timings, paths, dirs[-1])
    return EXIT_OK


def cmd_topology(args) -> int:
    _, cfg = load_configs(args)
    dirs, out = _search_dirs(args), _out_dir(args)
    timings: dict = {}
    with pl._stage("ingest", timings):
        cams = _read(read_cameras, pl.CAMERAS_ALIGNED, dirs, "ingest")
        views = _load_views(dirs, cams, "ingest")
        initial = _read(read_correspondences, pl.CORR_INITIAL, dirs, "ingest")
    with pl._stage("topology", timings):
        g_dist, g_time = pl.infer_topology(views, cams, initial, cfg)
    paths = [out / pl.TOPO[DIST], out / pl.TOPO[TIME]]
    write_topology(paths[0], g_dist)
    write_topology(paths[1], g_time)
    write_manifest(out, "topology", cfg, cfg.seed, timings, paths, dirs[-1])
    for key, h in sorted(g_dist.edges.items()):
        print(f"link {key[0]}-{key[1]}: mean distance {h.mean():.1f} m, {h.n_samples} samples")
    return EXIT_OK


def _load_topology(dirs, stage):
    return (_read(read_topology, pl.TOPO[DIST], dirs, stage), _read(read_topology, pl.TOPO[TIME], dirs, stage))


def cmd_reid(args) -> int:
    _, cfg = load_configs(args)
    dirs, out = _search_dirs(args), _out_dir(args)
    timings: dict = {}
    with pl._stage("ingest", timings):
        cams = _read(read_cameras, pl.CAMERAS_ALIGNED, dirs, "ingest")
        views = _load_views(dirs, cams, "ingest")
        g_dist, g_time = _load_topology(dirs, "ingest")
        pl.compute_speeds(views, cams)
    with pl._stage("final-reid", timings):
        final, _ = pl.final_reid(views, g_dist, g_time, cfg)
    paths = []
    for kind, corr in sorted(final.items()):
        paths.append(out / pl.CORR_FINAL[kind])
        write_correspondences(paths[-1], corr)
    write_manifest(out, "reid", cfg, cfg.seed, timings, paths, dirs[-1])
    return EXIT_OK


def _load_result(dirs, cfg, stage="evaluate") -> pl.PipelineResult:
    """Rebuild a PipelineResult from pipeline artifacts."""
    cams = _read(read_cameras, pl.CAMERAS_ALIGNED, dirs, stage)
    views = _load_views(dirs, cams, stage)
    pl.compute_speeds(views, cams)
    g_dist, g_time = _load_topology(dirs, stage)
    initial = _read(read_correspondences, pl.CORR_INITIAL, dirs, stage)
    final = {}
    for kind in pl.KINDS[cfg.topology]:
        try:
            final[kind] = _read(read_correspondences, pl.CORR_FINAL[kind], dirs, stage)
        except MissingArtifact:
            if cfg.topology != "both":
                raise
    return pl.PipelineResult(cfg, cams, cams, views, initial, [], None, g_dist, g_time, final=final)


def _summarize(report):
    print(f"stage-1 rank-1: {report.rank1_initial['rank1']:.1f}%")
    for kind, v in sorted(report.rank1_final.items()):
        print(f"{kind}-based rank-1: {v['rank1']:.1f}% ({v['tp']}/{v['t_gt']})")


def _pipeline_config_from(dirs, cfg, args):
    """Stored pipeline config (if any) with this run's flags on top."""
    try:
        path = _find(pl.PIPELINE_CONFIG, dirs, "evaluate")
    except MissingArtifact:
        return cfg
    stored = cfgmod.build(pl.PipelineConfig, cfgmod.read_kv(path))
    if args.config:
        return cfg
    return cfgmod.override(stored, threads=args.threads, topology=args.topology, coverage=args.coverage,
                           ranges=args.ranges)


def cmd_eval(args) -> int:
    _, cfg = load_configs(args)
    dirs = _search_dirs(args)
    out = Path(args.out) if args.out else dirs[0]
    out.mkdir(parents=True, exist_ok=True)
    cfg = _pipeline_config_from(dirs, cfg, args)
    timings: dict = {}
    with pl._stage("evaluate", timings):
        truth = _read(read_truth, pl.TRUTH, dirs, "evaluate")
        result = _load_result(dirs, cfg)
        report = evaluate(result, truth, cfg.ranges)
        paths = write_report(report, out)
    _summarize(report)
    write_manifest(out, "evaluate", cfg, cfg.seed, timings, paths.values(), dirs[-1])
    return EXIT_OK


def cmd_pipeline(args) -> int:
    _, cfg = load_configs(args)
    dirs, out = _search_dirs(args), _out_dir(args)
    timings: dict = {}
    with pl._stage("ingest", timings):
        cams = _read(read_cameras, pl.CAMERAS, dirs, "ingest")
        tracklets, _ = _read(read_tracklets, pl.TRACKLETS, dirs, "ingest")
    result = pl.run_pipeline(tracklets, cams, cfg)
    timings.update(result.timings)
    paths = list(pl.save_result(result, out).values())
    try:
        truth_path = _find(pl.TRUTH, dirs, "evaluate")
    except MissingArtifact:
        log.warning("no %s found; skipping evaluation", pl.TRUTH)
    else:
        with pl._stage("evaluate", timings):
            report = evaluate(result, read_truth(truth_path), cfg.ranges)
            paths += list(write_report(report, out).values())
        _summarize(report)
    write_manifest(out, "pipeline", cfg, cfg.seed, timings, paths, dirs[-1])
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "align": cmd_align,
    "topology": cmd_topology,
    "reid": cmd_reid,
    "evaluate": cmd_eval,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
