import csv
import json
import subprocess
import sys

import pytest

from disttopo import cli


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("world")
    assert cli.main(["simulate", "--out", str(d), "--seed", "2"]) == 0
    return d


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, data_dir):
    out = tmp_path_factory.mktemp("run")
    assert cli.main(["pipeline", "--in", str(data_dir), "--out", str(out), "--threads", "1"]) == 0
    return out


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_simulate_outputs(data_dir):
    for name in ("cameras.jsonl", "tracklets.jsonl", "truth.json", "manifest.json", "world_config.txt"):
        assert (data_dir / name).exists()
    assert len((data_dir / "cameras.jsonl").read_text().splitlines()) == 5


def test_simulate_empty_world(tmp_path):
    (tmp_path / "w.txt").write_text("n_persons = 0\n")
    assert cli.main(["simulate", "--config", str(tmp_path / "w.txt"), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "tracklets.jsonl").read_text() == ""
    assert json.loads((tmp_path / "o" / "truth.json").read_text())["pairs"] == []


def test_simulate_bad_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["simulate", "--out", str(blocker / "sub")]) != 0


def test_manifest(run_dir):
    man = json.loads((run_dir / "manifest.json").read_text())
    assert {"config_hash", "seed", "timings_s", "artifacts", "version"} <= set(man)
    assert set(man["timings_s"]) >= {"initial-reid", "scale-align", "topology", "final-reid", "evaluate"}
    for rel in man["artifacts"]:
        assert (run_dir / rel).exists()


def test_pipeline_report(run_dir):
    report = json.loads((run_dir / "report.json").read_text())
    assert report["rank1_final"]["distance"]["rank1"] > report["rank1_final"]["time"]["rank1"]
    rows = read_csv(run_dir / "retrieval_curve.csv")
    assert len(rows) == 9 and rows[0]["rate_dist"] and rows[0]["rate_time"]


def test_time_only_baseline(tmp_path, data_dir):
    out = tmp_path / "t"
    assert cli.main(["pipeline", "--in", str(data_dir), "--out", str(out), "--topology", "time"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["kinds"] == ["time"] and report["primary_kind"] == "time"
    assert not (out / "correspondences_final_distance.json").exists()
    assert all(r["rate_dist"] == "" for r in read_csv(out / "retrieval_curve.csv"))


def test_missing_camera_file(tmp_path, data_dir, capsys):
    d = tmp_path / "partial"
    d.mkdir()
    (d / "tracklets.jsonl").write_bytes((data_dir / "tracklets.jsonl").read_bytes())
    assert cli.main(["pipeline", "--in", str(d), "--out", str(tmp_path / "o")]) == cli.EXIT_DATA
    err = capsys.readouterr().err
    assert "[ingest]" in err and "cameras.jsonl" in err


def test_config_error_exit(tmp_path, data_dir):
    assert cli.main(["pipeline", "--in", str(data_dir), "--out", str(tmp_path), "--coverage", "1.5"]) == cli.EXIT_CONFIG
    (tmp_path / "bad.txt").write_text("no_such_key = 3\n")
    assert cli.main(["simulate", "--config", str(tmp_path / "bad.txt"), "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_flags_override_config_file(tmp_path):
    (tmp_path / "c.txt").write_text("coverage = 0.8\nmin_support = 7\nn_persons = 5\n")
    args = cli.build_parser().parse_args(["pipeline", "--config", str(tmp_path / "c.txt"), "--coverage", "0.9"])
    world, pipe = cli.load_configs(args)
    assert pipe.coverage == 0.9 and pipe.min_support == 7 and world.n_persons == 5


def test_every_flag_has_config_key():
    flags = {"seed", "threads", "topology", "coverage", "min_support", "sim_threshold", "bin_width_m",
             "bin_width_s", "ranges"}
    assert flags <= cli._PIPE_KEYS


def test_eval_deterministic_and_ranges(tmp_path, run_dir):
    outs = []
    for name in ("e1", "e2"):
        out = tmp_path / name
        assert cli.main(["evaluate", "--in", str(run_dir), "--out", str(out), "--ranges", "5,10,20,40"]) == 0
        outs.append(out)
    for name in ("retrieval_curve.csv", "rank1.csv", "link_stats.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    rows = read_csv(outs[0] / "retrieval_curve.csv")
    assert [float(r["range_s"]) for r in rows] == [5, 10, 20, 40]


def test_eval_reproduces_pipeline_csv(tmp_path, run_dir):
    assert cli.main(["evaluate", "--in", str(run_dir), "--out", str(tmp_path)]) == 0
    for name in ("retrieval_curve.csv", "rank1.csv", "link_stats.csv"):
        assert (tmp_path / name).read_bytes() == (run_dir / name).read_bytes()


def test_eval_missing_artifacts(tmp_path):
    assert cli.main(["evaluate", "--in", str(tmp_path)]) == cli.EXIT_DATA


def test_eval_empty_topology(tmp_path, data_dir):
    out = tmp_path / "r"
    # support threshold above any pair count: no links
    assert cli.main(["pipeline", "--in", str(data_dir), "--out", str(out), "--min-support", "100000"]) == 0
    for row in read_csv(out / "retrieval_curve.csv"):
        assert float(row["rate_time"]) == 0.0 and float(row["rate_dist"]) == 0.0


def test_stagewise_matches_pipeline(tmp_path, data_dir, run_dir):
    s = tmp_path / "s"
    assert cli.main(["align", "--in", str(data_dir), "--out", str(s)]) == 0
    assert cli.main(["topology", "--in", str(s), "--data", str(data_dir), "--out", str(s)]) == 0
    assert cli.main(["reid", "--in", str(s), "--data", str(data_dir), "--out", str(s)]) == 0
    for name in ("cameras_aligned.jsonl", "correspondences_initial.json", "topology_distance.json",
                 "topology_time.json", "correspondences_final_distance.json", "correspondences_final_time.json"):
        assert (s / name).read_bytes() == (run_dir / name).read_bytes(), name


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "disttopo.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "disttopo" in proc.stdout
