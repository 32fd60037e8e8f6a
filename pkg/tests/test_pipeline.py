import numpy as np
import pytest

from disttopo import config as cfgmod
from disttopo.errors import ConfigError, InvalidConfig
from disttopo.evaluate import rank1
from disttopo.pipeline import (
    PipelineConfig,
    coverage_for_range,
    mean_width,
    run_pipeline,
    save_result,
)
from disttopo.sim import WorldConfig, generate_world
from disttopo.topology import DIST, TIME
from disttopo.tracklets import Tracklet

from .helpers import assert_sound


def test_single_camera_world():
    cams, trs, truth = generate_world(WorldConfig(rng_seed=0, n_cameras=1, links=[], n_persons=30))
    res = run_pipeline(trs, cams, PipelineConfig(threads=1))
    assert res.initial == []
    assert not res.g_dist.edges and not res.g_time.edges
    assert all(c == [] for c in res.final.values())
    assert truth.pairs == []


def test_final_beats_stage_one(desk_world, desk_result):
    truth = desk_world[2]
    s1 = rank1(desk_result.initial, desk_result.views, truth)[2]
    for kind in (DIST, TIME):
        assert rank1(desk_result.final[kind], desk_result.views, truth)[2] > s1


def test_scale_errors_corrected():
    errs = [1.0, 0.5, 2.0, 1.0, 1.25]
    cams, trs, _ = generate_world(WorldConfig(rng_seed=1, camera_scale_errors=errs))
    res = run_pipeline(trs, cams, PipelineConfig(threads=1))
    eff = [c.scale * e for c, e in zip(res.cams_aligned, errs)]
    for a in eff:
        for b in eff:
            assert abs(a / b - 1.0) <= 0.02
    assert res.scale_solution.reference == 0 and not res.scale_solution.flagged


def test_restriction_sound_every_kind(desk_result):
    for kind, sets in desk_result.final.items():
        for c in sets:
            assert_sound(c, desk_result.views, desk_result.final_windows[kind][(c.cam_k, c.cam_l)])


def test_thread_count_does_not_change_results(desk_world, desk_result):
    cams, trs, _ = desk_world
    res = run_pipeline(trs, cams, PipelineConfig(threads=3))
    assert res.initial == desk_result.initial
    assert res.final == desk_result.final


def test_unknown_camera_is_labeled():
    cams, trs, _ = generate_world(WorldConfig(rng_seed=0, n_persons=10))
    stray = Tracklet(9, 0, [0.0, 1.0], np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 32)))
    with pytest.raises(InvalidConfig) as exc:
        run_pipeline(trs + [stray], cams)
    assert exc.value.stage == "ingest"
    assert "[ingest]" in str(exc.value)


@pytest.mark.parametrize("field,value", [
    ("sim_threshold", 1.5), ("coverage", 0.0), ("min_support", 0), ("bin_width_m", 0.0),
    ("support_s", [10.0, -10.0]), ("topology", "graph"), ("ranges", [-5.0]),
])
def test_config_validation(field, value):
    with pytest.raises(InvalidConfig):
        PipelineConfig(**{field: value}).validate()


def test_coverage_for_range_hits_target(desk_result):
    r = desk_result
    for kind in (DIST, TIME):
        for target in (5.0, 20.0, 45.0):
            cov, stretch = coverage_for_range(kind, r.views, r.g_dist, r.g_time, target, r.config)
            width = mean_width(kind, r.views, r.g_dist, r.g_time, cov, r.config) * stretch
            assert width == pytest.approx(target, rel=1e-6)


def test_save_result(tmp_path, desk_result):
    paths = save_result(desk_result, tmp_path)
    for p in paths.values():
        assert p.exists() and p.stat().st_size > 0
    stored = cfgmod.build(PipelineConfig, cfgmod.read_kv(tmp_path / "pipeline_config.txt"))
    assert stored == desk_result.config


class TestConfigFiles:
    def test_parse(self):
        d = cfgmod.parse_kv("a = 1\nb = [1, 2]  # comment\nc = hello\n\nd = true\n")
        assert d == {"a": 1, "b": [1, 2], "c": "hello", "d": True}

    def test_bad_line(self):
        with pytest.raises(ConfigError):
            cfgmod.parse_kv("just words\n")

    def test_unknown_key(self):
        with pytest.raises(InvalidConfig):
            cfgmod.build(PipelineConfig, {"nope": 1})

    def test_dump_round_trip(self):
        cfg = PipelineConfig(coverage=0.9, ranges=[5.0, 10.0])
        assert cfgmod.build(PipelineConfig, cfgmod.parse_kv(cfgmod.dump_kv(cfg))) == cfg

    def test_override_ignores_none(self):
        cfg = cfgmod.override(PipelineConfig(), coverage=None, min_support=5)
        assert cfg.coverage == 0.95 and cfg.min_support == 5

    def test_hash_changes(self):
        assert cfgmod.config_hash(PipelineConfig()) != cfgmod.config_hash(PipelineConfig(coverage=0.9))


def test_ordering_survives_speed_jitter():
    cams, trs, truth = generate_world(WorldConfig(rng_seed=1, speed_jitter=True))
    res = run_pipeline(trs, cams, PipelineConfig(threads=1))
    dist = rank1(res.final[DIST], res.views, truth)[2]
    time_ = rank1(res.final[TIME], res.views, truth)[2]
    assert dist > time_ > rank1(res.initial, res.views, truth)[2]
