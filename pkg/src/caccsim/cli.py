"""Command-line runner for the strategy x market-penetration x replication
matrix.

Output layout::

    <out>/<STRATEGY>/mp_<pct>/rep_<n>/summary.csv
                                     /ticks.csv
                                     /travel_times.csv
                                     /platoon_events.csv
                                     /lane_changes.csv
    <out>/summary.csv        every cell, one row each
    <out>/score_matrix.csv   tested strategies scored against BASE

Exit codes: 0 success, 2 configuration error, 3 runtime fault.
"""
import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .enums import Strategy, VehicleClass
from .errors import ConfigError, SimulationFault
from .fleet import EVENT_NAMES
from .metrics import score_matrix, summarize
from .scenario import ScenarioConfig, desk_scale, load_config

EXIT_OK, EXIT_CONFIG, EXIT_FAULT = 0, 2, 3
DEFAULT_MPS = tuple(round(0.05 * k, 2) for k in range(1, 12))
TESTED = (Strategy.UML, Strategy.MML, Strategy.DL, Strategy.DLA)
WORKERS_ENV = "CACCSIM_WORKERS"
LC_KINDS = ("none", "discretionary", "cluster", "mandatory", "ramp_merge")

SUMMARY_UNITS = ("# units: mp fraction; q_kmh km/h; pti ratio; speed_std_ms m/s; fuel_l litres; "
                 "gp_median_tt_s s; pct_platooned percent; mean_depth position; vhp veh-h per h; "
                 "vmt_km veh-km; vht_h veh-h; counts in vehicles; empty = absent")


def cell_seed(base_seed, rep):
    """Seed of replication ``rep``, stable across platforms and versions.

    It depends on the base seed and replication only, so every strategy and
    penetration rate sees the same demand realisation (common random
    numbers) and a cell's result never depends on which other cells run.
    """
    return int(np.random.SeedSequence([int(base_seed), int(rep)]).generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class Cell:
    strategy: Strategy
    mp: float
    rep: int
    seed: int

    @property
    def path(self):
        return Path(self.strategy.value) / f"mp_{int(round(self.mp * 100)):03d}" / f"rep_{self.rep}"

    @property
    def name(self):
        return f"{self.strategy.value} mp={self.mp:g} rep={self.rep}"


@dataclass(frozen=True)
class RunMatrix:
    strategies: Tuple[Strategy, ...] = TESTED
    mp_values: Tuple[float, ...] = DEFAULT_MPS
    replications: int = 5
    base_seed: int = 1

    def cells(self) -> List[Cell]:
        """Requested cells, plus the BASE reference at MP 0 for scoring."""
        out = [Cell(s, mp, r, cell_seed(self.base_seed, r))
               for s in self.strategies for mp in self.mp_values for r in range(1, self.replications + 1)]
        have = {(c.strategy, c.mp) for c in out}
        if (Strategy.BASE, 0.0) not in have:
            out += [Cell(Strategy.BASE, 0.0, r, cell_seed(self.base_seed, r))
                    for r in range(1, self.replications + 1)]
        return out


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv_text(units, header, rows):
    buf = io.StringIO()
    buf.write(units + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


SUMMARY_KEYS = ("q_kmh", "pti", "speed_std_ms", "fuel_l", "gp_median_tt_s", "pct_platooned",
                "mean_depth", "vhp", "vmt_km", "vht_h", "traversals", "fallbacks", "missed_exits",
                "starved", "latent_max", "violations")
SUMMARY_HEADER = ("strategy", "mp", "rep", "seed") + SUMMARY_KEYS


def run_cell(cfg: ScenarioConfig, cell: Cell, out: Optional[Path] = None):
    """Simulate one cell; writes its CSVs when ``out`` is given.

    Returns the summary row as a dict.
    """
    from .core import World
    world = World(cfg.with_(strategy=cell.strategy, market_penetration=cell.mp), cell.seed).run()
    row = summarize(world.ledger())
    if out is not None:
        d = Path(out) / cell.path
        _write(d / "summary.csv", _csv_text(
            SUMMARY_UNITS, SUMMARY_HEADER,
            [(cell.strategy.value, cell.mp, cell.rep, cell.seed) + tuple(row[k] for k in SUMMARY_KEYS)]))
        tk = world.ticks
        _write(d / "ticks.csv", _csv_text(
            "# units: t s; counts in vehicles; depth_sum sum of platoon positions",
            ("t", "n_cacc", "n_platooned", "n_platoons", "depth_sum", "violations", "latent"),
            [(float(r[0]),) + tuple(int(x) for x in r[1:]) for r in tk]))
        ledger = world.ledger()
        tt_rows = [(c.name, float(x)) for c in VehicleClass for x in ledger.travel_times[c.name]]
        _write(d / "travel_times.csv", _csv_text(
            "# units: travel_time_s s (full mainline traverse, entered after warm-up)",
            ("class", "travel_time_s"), tt_rows))
        _write(d / "platoon_events.csv", _csv_text(
            "# units: t s; size in vehicles; pid -1 = none",
            ("t", "event", "pid", "vid", "size"),
            [(float(r[0]), EVENT_NAMES[int(r[1])], int(r[2]), int(r[3]), int(r[4]))
             for r in world.platoon_events]))
        _write(d / "lane_changes.csv", _csv_text(
            "# units: t s; position m; incentive m/s2; lanes 0 = rightmost, -1 = acceleration lane",
            ("t", "vid", "class", "from_lane", "to_lane", "position", "kind", "incentive"),
            [(float(r[0]), int(r[1]), VehicleClass(int(r[2])).name, int(r[3]), int(r[4]), float(r[5]),
              LC_KINDS[int(r[6])], float(r[7])) for r in world.lane_changes]))
    return row


def _run_one(args):
    cfg, cell, out = args
    try:
        return cell, run_cell(cfg, cell, out), None
    except SimulationFault as exc:
        return cell, None, str(exc)


def workers_from_env():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError([f"{WORKERS_ENV} must be an integer (got {raw!r})"])


def run_matrix(cfg: ScenarioConfig, matrix: RunMatrix, out: Optional[Path] = None, workers=1):
    """Run every cell; returns ``{cell: summary row}``.

    Raises SimulationFault naming the first faulting cell (in matrix order)
    after all other cells have finished and been written.
    """
    cells = matrix.cells()
    jobs = [(cfg, c, out) for c in cells]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_one, jobs))
    else:
        done = [_run_one(j) for j in jobs]
    results, faults = {}, []
    for cell, row, err in done:
        if err is not None:
            faults.append((cell, err))
        else:
            results[cell] = row
    if out is not None:
        _write(Path(out) / "summary.csv", _csv_text(
            SUMMARY_UNITS, SUMMARY_HEADER,
            [(c.strategy.value, c.mp, c.rep, c.seed) + tuple(r[k] for k in SUMMARY_KEYS)
             for c, r in results.items()]))
        _write(Path(out) / "score_matrix.csv", score_csv(results, matrix))
    if faults:
        cell, err = faults[0]
        raise SimulationFault(f"cell {cell.name}: {err}", {"cell": cell})
    return results


def score_csv(results, matrix: RunMatrix):
    base = [r for c, r in results.items() if c.strategy == Strategy.BASE and c.mp == 0.0]
    tested = [s for s in matrix.strategies if s != Strategy.BASE]
    grid = {}
    for c, r in results.items():
        if c.strategy != Strategy.BASE:
            grid.setdefault((c.strategy.value, c.mp), []).append(r)
    sm = score_matrix(grid, base, [s.value for s in tested], list(matrix.mp_values))
    header = ("strategy", "mp", "mobility", "safety", "equity", "environment", "platooning", "normalized_sum")
    rows = [tuple(row[k] for k in header) for row in sm.rows()]
    return _csv_text("# units: traditional scores -1/0/1 vs BASE; platooning rank (best = number of "
                     "strategies); normalized_sum dimensionless; empty = absent", header, rows)


# ---------------------------------------------------------------- entry point

def _parse_list(text, conv, what):
    try:
        return tuple(conv(x.strip()) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError([f"--{what}: {exc}"])


def _parse_mp(x):
    v = float(x)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"market penetration {x} is not a fraction in [0, 1]")
    return round(v, 6)


def build_parser():
    p = argparse.ArgumentParser(prog="caccsim", description="CACC managed-lane strategy simulator")
    p.add_argument("--config", type=Path, help="scenario TOML file (defaults built in)")
    p.add_argument("--out", type=Path, default=Path("caccsim_out"), help="output directory")
    p.add_argument("--strategies", default=",".join(s.value for s in TESTED),
                   help="comma-separated subset of BASE,UML,MML,DL,DLA")
    p.add_argument("--mp", default=",".join(f"{m:g}" for m in DEFAULT_MPS),
                   help="comma-separated market penetrations in [0, 1]")
    p.add_argument("--reps", type=int, default=None, help="replications per cell (default: number of config seeds)")
    p.add_argument("--seed", type=int, default=None, help="base seed (default: first config seed)")
    p.add_argument("--desk-scale", action="store_true", help="2 km, 1800 s, half-demand preset")
    p.add_argument("--validate", action="store_true", help="check the configuration and exit")
    return p


def load(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig().validate()
    if args.desk_scale:
        cfg = desk_scale(cfg).validate()
    return cfg


def main(argv: Optional[Sequence[str]] = None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args)
        if args.validate:
            print("ok")
            return EXIT_OK
        strategies = _parse_list(args.strategies, Strategy.parse, "strategies")
        mps = _parse_list(args.mp, _parse_mp, "mp")
        reps = len(cfg.seeds) if args.reps is None else args.reps
        if reps < 1 or not strategies or not mps:
            raise ConfigError(["need at least one strategy, one MP value and one replication"])
        seed = cfg.seeds[0] if args.seed is None else args.seed
        matrix = RunMatrix(tuple(dict.fromkeys(strategies)), tuple(dict.fromkeys(mps)), reps, seed)
        workers = workers_from_env()
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        results = run_matrix(cfg, matrix, args.out, workers)
    except SimulationFault as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    print(f"{len(results)} cells written to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
