import csv
import os
import subprocess
import sys
from pathlib import Path

import pytest

from caccsim import Strategy
from caccsim.cli import EXIT_CONFIG, EXIT_FAULT, EXIT_OK, RunMatrix, cell_seed, main

ROOT = Path(__file__).resolve().parents[1]
FAULTY = """
[scenario]
dt = 1.0
[human]
a = 30.0
b = 0.05
T = 0.1
s0 = 0.1
delta = 1.0
"""


def _cli(*args, env=None):
    full = dict(os.environ, **(env or {}))
    return subprocess.run([sys.executable, "-m", "caccsim", *map(str, args)], capture_output=True, text=True,
                          env=full, cwd=ROOT)


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def test_single_cell_run(tmp_path):
    assert main(["--desk-scale", "--strategies", "BASE", "--mp", "0", "--reps", "1",
                 "--out", str(tmp_path)]) == EXIT_OK
    files = tree(tmp_path)
    for name in ("summary.csv", "ticks.csv", "travel_times.csv", "platoon_events.csv", "lane_changes.csv"):
        assert f"BASE/mp_000/rep_1/{name}" in files
        assert files[f"BASE/mp_000/rep_1/{name}"].startswith(b"# units:")
    assert "score_matrix.csv" in files
    row = _rows(tmp_path / "summary.csv")[0]
    assert row["strategy"] == "BASE" and float(row["q_kmh"]) > 0 and row["violations"] == "0"


def test_baseline_added_and_seeds_shared():
    cells = RunMatrix((Strategy.DL,), (0.2, 0.4), 2, base_seed=9).cells()
    assert [(c.strategy.value, c.mp, c.rep) for c in cells] == [
        ("DL", 0.2, 1), ("DL", 0.2, 2), ("DL", 0.4, 1), ("DL", 0.4, 2), ("BASE", 0.0, 1), ("BASE", 0.0, 2)]
    assert {c.seed for c in cells if c.rep == 1} == {cell_seed(9, 1)}
    assert cell_seed(9, 1) != cell_seed(9, 2) != cell_seed(10, 2)


def test_validate_prints_ok():
    res = _cli("--config", ROOT / "configs" / "default.toml", "--validate")
    assert res.returncode == EXIT_OK and res.stdout.strip() == "ok"


def test_invalid_config_exits_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[platoon]\nT_intra = 1.5\nT_inter = 1.2\n")
    res = _cli("--config", bad, "--validate")
    assert res.returncode == EXIT_CONFIG
    assert "T_intra" in res.stderr
    assert _cli("--mp", "1.4", "--out", tmp_path / "x").returncode == EXIT_CONFIG
    assert _cli("--strategies", "XYZ", "--out", tmp_path / "x").returncode == EXIT_CONFIG
    res = _cli("--desk-scale", "--strategies", "BASE", "--mp", "0", "--reps", "1", "--out", tmp_path / "x",
               env={"CACCSIM_WORKERS": "many"})
    assert res.returncode == EXIT_CONFIG


def test_runtime_fault_exits_3(tmp_path):
    cfg = tmp_path / "faulty.toml"
    cfg.write_text(FAULTY)
    res = _cli("--config", cfg, "--desk-scale", "--strategies", "BASE", "--mp", "0", "--reps", "1",
               "--out", tmp_path / "out")
    assert res.returncode == EXIT_FAULT
    assert "overlap" in res.stderr and "BASE mp=0 rep=1" in res.stderr


def test_repeat_runs_are_byte_identical(tmp_path):
    args = ["--desk-scale", "--strategies", "DL", "--mp", "0.3", "--reps", "1", "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    a, b = tree(tmp_path / "a"), tree(tmp_path / "b")
    assert len(a) == 2 * 5 + 2 and a == b


def test_parallel_matches_serial(tmp_path):
    args = ["--desk-scale", "--strategies", "DLA", "--mp", "0.3", "--reps", "1", "--seed", "4"]
    assert _cli(*args, "--out", tmp_path / "serial", env={"CACCSIM_WORKERS": "1"}).returncode == EXIT_OK
    assert _cli(*args, "--out", tmp_path / "par", env={"CACCSIM_WORKERS": "2"}).returncode == EXIT_OK
    assert tree(tmp_path / "serial") == tree(tmp_path / "par")


@pytest.mark.parametrize("flag", ["--config", "--out", "--strategies", "--mp", "--reps", "--seed",
                                  "--desk-scale", "--validate"])
def test_help_lists_flags(flag):
    res = _cli("--help")
    assert res.returncode == 0 and flag in res.stdout
