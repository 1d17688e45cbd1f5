import csv
import json
import subprocess
import sys

import pytest

from pongsnn.cli import main, parse_seeds, UsageError

FAST = ["--iterations", "40", "--eval_every=20", "--eval_repeats=1"]


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["run", "--out", str(out), "--seed", "7", "--quiet", *FAST]) == 0
    return out


def test_run_outputs(run_dir):
    for name in ["manifest.json", "iterations.csv", "log.ndjson", "catch_fraction.csv",
                 "mean_reward.csv", "summary.txt", "weights_initial.txt", "weights_final.txt",
                 "config.ini"]:
        assert (run_dir / name).is_file(), name
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["status"] == "complete" and manifest["partial"] is False
    assert manifest["seed"] == 7 and manifest["finished"] is not None
    header = (run_dir / "iterations.csv").read_text().splitlines()[0]
    assert header == "iteration,state,action,reward,baseline,wall_time_s"
    assert len((run_dir / "iterations.csv").read_text().splitlines()) == 41


def test_same_seed_byte_identical(run_dir, tmp_path, capsys):
    code, _, _ = run(["run", "--out", tmp_path, "--seed", "7", "--quiet", *FAST], capsys)
    assert code == 0
    for name in ["iterations.csv", "log.ndjson", "catch_fraction.csv", "weights_final.txt"]:
        assert (tmp_path / name).read_bytes() == (run_dir / name).read_bytes(), name


def test_catch_curve_row_count(tmp_path, capsys):
    code, _, _ = run(["run", "--out", tmp_path, "--iterations", "60", "--eval_every=20",
                      "--eval_repeats=1", "--quiet"], capsys)
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "catch_fraction.csv")))
    assert rows[0] == ["iteration", "catch_fraction"]
    assert [int(r[0]) for r in rows[1:]] == [20, 40, 60]


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "absent.ini"
    code, _, err = run(["run", "--config", missing, "--out", tmp_path / "o"], capsys)
    assert code == 1 and str(missing) in err


def test_bad_config_key_reports_line(tmp_path, capsys):
    path = tmp_path / "c.ini"
    path.write_text("[plasticity]\neta = 0.1\netta = 0.2\n")
    code, _, err = run(["run", "--config", path, "--out", tmp_path / "o"], capsys)
    assert code == 1 and "plasticity.etta" in err and "line 3" in err


def test_usage_errors(tmp_path, capsys):
    assert run(["run", "--out", tmp_path, "stray"], capsys)[0] == 1
    assert run(["frobnicate"], capsys)[0] == 1
    assert run(["run", "--out", tmp_path, "--snn.nope=1"], capsys)[0] == 1


def test_replay_roundtrip(run_dir, tmp_path, capsys):
    code, out, _ = run(["replay", run_dir / "log.ndjson", "--out", tmp_path, "--quiet"], capsys)
    assert code == 0
    for name in ["catch_fraction.csv", "mean_reward.csv", "summary.txt"]:
        assert (tmp_path / name).read_bytes() == (run_dir / name).read_bytes(), name
    heat = list(csv.reader(open(tmp_path / "weights_heatmap.csv")))
    assert heat[0] == ["row", "col", "level"] and len(heat) - 1 == 32 * 32
    ma = list(csv.reader(open(tmp_path / "reward_moving_average.csv")))
    assert len(ma) - 1 == 40
    assert json.loads(out)["n_iterations"] == 40


def test_replay_csv_log(run_dir, tmp_path, capsys):
    code, _, _ = run(["replay", run_dir / "iterations.csv", "--out", tmp_path,
                      "--eval-every", "20", "--quiet"], capsys)
    assert code == 0
    assert (tmp_path / "mean_reward.csv").read_bytes() == (run_dir / "mean_reward.csv").read_bytes()


def test_replay_truncated_log(run_dir, tmp_path, capsys):
    lines = (run_dir / "log.ndjson").read_text().splitlines(keepends=True)
    bad = tmp_path / "cut.ndjson"
    bad.write_text("".join(lines[:10]) + lines[10][: len(lines[10]) // 2])
    code, _, err = run(["replay", bad, "--out", tmp_path / "o"], capsys)
    assert code == 2 and "line 10" in err
    clipped = tmp_path / "clipped.ndjson"
    clipped.write_text("".join(lines[:12]))
    code, _, err = run(["replay", clipped, "--out", tmp_path / "o"], capsys)
    assert code == 2 and "line 12" in err


def test_replay_empty_log(tmp_path, capsys):
    empty = tmp_path / "empty.ndjson"
    empty.write_text("")
    assert run(["replay", empty, "--out", tmp_path / "o"], capsys)[0] != 0


def test_manifest_reproduces_run(run_dir, tmp_path, capsys):
    code, _, _ = run(["run", "--config", run_dir / "manifest.json", "--out", tmp_path, "--quiet"], capsys)
    assert code == 0
    assert (tmp_path / "iterations.csv").read_bytes() == (run_dir / "iterations.csv").read_bytes()
    assert (tmp_path / "log.ndjson").read_bytes() == (run_dir / "log.ndjson").read_bytes()


def test_sweep_parallel_equals_serial(tmp_path, capsys):
    base = ["sweep", "--seeds", "0-2", "--quiet", *FAST]
    assert run([*base, "--out", tmp_path / "s", "--workers", "1"], capsys)[0] == 0
    assert run([*base, "--out", tmp_path / "p", "--workers", "3"], capsys)[0] == 0
    agg = "catch_fraction_aggregate.csv"
    assert (tmp_path / "s" / agg).read_bytes() == (tmp_path / "p" / agg).read_bytes()
    rows = list(csv.reader(open(tmp_path / "s" / agg)))
    assert rows[0] == ["iteration", "median", "q25", "q75", "n_seeds"]
    assert all(r[4] == "3" for r in rows[1:])
    status = list(csv.DictReader(open(tmp_path / "s" / "seeds.csv")))
    assert [s["status"] for s in status] == ["ok"] * 3
    # a sweep member reproduces a standalone run with the same seed
    assert run(["run", "--seed", "1", "--out", tmp_path / "r", "--quiet", *FAST], capsys)[0] == 0
    assert (tmp_path / "s" / "seed_1" / "log.ndjson").read_bytes() == \
        (tmp_path / "r" / "log.ndjson").read_bytes()


def test_single_seed_aggregate_equals_curve(tmp_path, capsys):
    assert run(["sweep", "--seeds", "4", "--out", tmp_path, "--quiet", *FAST], capsys)[0] == 0
    agg = list(csv.DictReader(open(tmp_path / "catch_fraction_aggregate.csv")))
    curve = list(csv.DictReader(open(tmp_path / "seed_4" / "catch_fraction.csv")))
    for a, c in zip(agg, curve, strict=True):
        assert float(a["median"]) == float(a["q25"]) == float(a["q75"]) == float(c["catch_fraction"])


def test_parse_seeds():
    assert parse_seeds("0-3,7") == [0, 1, 2, 3, 7]
    with pytest.raises(UsageError):
        parse_seeds("a-b")


def test_bench_single_mode(tmp_path, capsys):
    code, out, _ = run(["bench", "--out", tmp_path, "--modes", "no-plasticity", "--sizes", "8x8",
                        "--bench.n_iterations=12", "--bench.warmup=2", "--quiet"], capsys)
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "bench_report.csv")))
    assert [r["mode"] for r in rows] == ["no-plasticity"]
    samples = list(csv.DictReader(open(tmp_path / "bench_samples.csv")))
    assert len(samples) == 10
    assert json.loads(out)["rows"][0]["n_samples"] == 10


def test_bench_default_modes(tmp_path, capsys):
    code, _, _ = run(["bench", "--out", tmp_path, "--sizes", "8x8", "--bench.n_iterations=6",
                      "--bench.warmup=1", "--quiet"], capsys)
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "bench_report.csv")))
    assert [r["mode"] for r in rows] == ["no-plasticity", "with-plasticity"]


def test_bench_malformed_sizes(tmp_path, capsys):
    code, _, err = run(["bench", "--out", tmp_path, "--sizes", "32by32"], capsys)
    assert code == 1 and "32by32" in err


def test_quiet_stdout_is_json_only(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pongsnn.cli", "run", "--out", str(tmp_path),
                           "--quiet", *FAST], capture_output=True, text=True, check=True)
    payload = json.loads(proc.stdout)
    assert payload["seed"] == 0 and proc.stdout.count("\n") == 1
    assert proc.stderr == ""
    loud = subprocess.run([sys.executable, "-m", "pongsnn.cli", "run", "--out", str(tmp_path / "l"),
                           *FAST], capture_output=True, text=True, check=True)
    json.loads(loud.stdout)
    assert "catch fraction" in loud.stderr
