"""Command-line workflows.

Subcommands:

* ``baseline``   build a category space and frequency table from call logs
* ``monitor``    stream a log through the sequential detector
* ``simulate``   run the seeded Monte Carlo detection-rate experiment
* ``attribute``  rank anomalous categories for a finished monitor run
* ``report``     render figures for a run directory's delimited output
* ``demo``       materialize the bundled sample data and experiment config

Every data-producing command writes a manifest recording tool version,
config hash, seed, and input digests.  Exit codes: 0 success / no alarm,
1 error, 2 drift alarm (monitor only).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import attribution, chi2, demo
from .detector import DetectorConfig, DriftDetector
from .errors import ValidationError
from .ingest import CSV, JSONL, FrequencyTable, accumulate, parse_log, to_observations
from .manifest import MANIFEST_NAME, build_manifest, write_manifest
from .prior import DEFAULT_FLOOR, DEFAULT_PRIOR_WEIGHT, PriorSpec, build_prior
from .simulate import DetectionRateTable, ExperimentConfig, run_experiment
from .space import PAIR, SINGLE, CategorySpace, build_space

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ALARM = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for drift alarms here.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def _fp_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fp level list: {text!r}")
    if not values or any(not 0.0 < v < 1.0 for v in values):
        raise argparse.ArgumentTypeError("fp levels must lie strictly between 0 and 1")
    return values


def _write_text(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2) + "\n")
    return path


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# baseline
# ---------------------------------------------------------------------------

def cmd_baseline(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for log_path in args.logs:
        records.extend(parse_log(log_path, args.format))
    if not records:
        raise ValidationError("empty baseline: no call records parsed")

    names = {rec.api for rec in records}
    if args.mode == PAIR:
        names |= {rec.parent for rec in records if rec.parent is not None}
    space = build_space(sorted(names), args.mode)
    table = accumulate(space, to_observations(records, args.mode))

    outputs = [
        _write_text(out / "space.json", space.to_json() + "\n"),
        _write_text(out / "baseline_counts.json", table.to_json() + "\n"),
    ]
    if args.mode == PAIR:
        outputs.append(_write_text(out / "baseline_matrix.csv", table.to_matrix_csv()))
    config = {"mode": args.mode, "format": args.format, "logs": [str(p) for p in args.logs]}
    write_manifest(out, build_manifest("baseline", config, args.logs, outputs))
    print(f"baseline over {table.total} calls, {space.K} categories -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# monitor
# ---------------------------------------------------------------------------

def _load_baseline(baseline_dir: Path) -> FrequencyTable:
    counts_path = baseline_dir / "baseline_counts.json"
    if not counts_path.exists():
        raise ValidationError(f"no baseline_counts.json under {baseline_dir}")
    return FrequencyTable.from_json(counts_path.read_text())


def cmd_monitor(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    baseline_dir = Path(args.baseline)
    table = _load_baseline(baseline_dir)
    odds = 1.0 if args.prior_odds is None else args.prior_odds
    prior = build_prior(table, args.prior_weight, args.floor, odds)
    config = DetectorConfig(
        fp_levels=tuple(args.fp), forgetting_w=args.forget, prior_odds=args.prior_odds
    )
    detector = DriftDetector(prior, config, track_history=(args.history == "on"))
    strictest = min(args.fp)

    if args.log == "-":
        records = parse_log(sys.stdin.buffer, args.format)
    else:
        records = parse_log(args.log, args.format)
    observations = to_observations(records, table.space.mode)

    categories = []
    stopped_early = False
    alarm_records = []
    traj_path = out / "trajectory.csv"
    with open(traj_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "category", "log_psi", "log_bf"])
        for obs in observations:
            cat = table.space.encode(obs)
            result = detector.step(cat)
            categories.append(cat)
            writer.writerow([detector.t, cat, _fmt(result.log_psi), _fmt(result.log_bf)])
            for fp in result.newly_alarmed:
                alarm_records.append(
                    {"fp_level": fp, "t": detector.t, "log_bf": result.log_bf}
                )
            if strictest in detector.alarmed_at and not args.keep_going:
                stopped_early = True
                break

    alarms = {
        "fp_levels": list(args.fp),
        "forgetting_w": args.forget,
        "t_final": detector.t,
        "log_bf_final": detector.log_bf,
        "stopped_at_alarm": stopped_early,
        "alarms": sorted(alarm_records, key=lambda r: (r["t"], -r["fp_level"])),
    }
    outputs = [traj_path, _write_json(out / "alarms.json", alarms),
               _write_text(out / "prior.json", prior.to_json() + "\n")]

    if detector.t > 0 and detector.track_history:
        report = attribution.top_k_report(detector, k=args.top_k)
        outputs += _write_attribution_files(out, report)
    if args.chi2 and categories:
        rows = chi2.chi2_trajectory(categories, prior.theta0)
        outputs.append(_write_chi2_trajectory(out / "chi2_trajectory.csv", rows))

    cfg = {
        "baseline": str(baseline_dir),
        "fp_levels": list(args.fp),
        "forget": args.forget,
        "prior_weight": args.prior_weight,
        "floor": args.floor,
        "history": args.history,
        "log": str(args.log),
    }
    inputs = [baseline_dir / "baseline_counts.json"] + ([] if args.log == "-" else [args.log])
    write_manifest(out, build_manifest("monitor", cfg, inputs, outputs))

    if detector.alarmed_at:
        for fp, t in sorted(detector.alarmed_at.items(), reverse=True):
            print(f"ALARM fp={fp:g} at t={t}")
        return EXIT_ALARM
    print(f"no alarm after {detector.t} observations (log BF {detector.log_bf:.4f})")
    return EXIT_OK


def _write_chi2_trajectory(path: Path, rows) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "statistic", "p_value"])
        for t, stat, p in rows:
            writer.writerow([t, _fmt(stat), _fmt(p)])
    return path


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _load_experiment_config(path: Path) -> ExperimentConfig:
    if path.suffix == ".json":
        raw = json.loads(path.read_text())
    else:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    section = raw.get("experiment", raw)
    base_dir = path.parent

    def load_table(key: str) -> FrequencyTable:
        ref = section.get(key)
        if ref is None:
            raise ValidationError(f"experiment config is missing {key!r}")
        return FrequencyTable.from_json((base_dir / ref).read_text())

    return ExperimentConfig(
        baseline=load_table("baseline"),
        alternate=load_table("alternate"),
        pi_values=section.get("pi_values", [0.0, 0.05, 0.10, 0.20, 0.30, 1.0]),
        reps=int(section.get("reps", 500)),
        draws=int(section.get("draws", 1000)),
        fp_levels=section.get("fp_levels", [0.10, 0.05, 0.01]),
        master_seed=int(section.get("master_seed", 0)),
        prior_weight=float(section.get("prior_weight", DEFAULT_PRIOR_WEIGHT)),
        prior_floor=float(section.get("prior_floor", DEFAULT_FLOOR)),
    )


def _write_trajectories(out: Path, table) -> list[Path]:
    paths = []
    for i, pi in enumerate(table.pi_values):
        path = out / f"trajectories_pi{pi:g}.csv"
        traj = table.trajectories[i]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t"] + [f"rep_{r}" for r in range(table.reps)])
            for t in range(table.draws):
                writer.writerow([t + 1] + [_fmt(v) for v in traj[:, t]])
        paths.append(path)
    return paths


def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config_path = Path(args.config)
    config = _load_experiment_config(config_path)
    if args.seed is not None:
        config.master_seed = args.seed
    jobs = args.jobs if args.jobs is not None else int(os.environ.get("APIDRIFT_JOBS", "1"))

    table = run_experiment(
        config, jobs=jobs, keep_trajectories=args.trajectories, with_chi2=args.chi2
    )

    outputs = [
        _write_text(out / "detection_rates.csv", table.rates_csv()),
        _write_json(out / "detection_rates.json", table.to_json_dict()),
        _write_text(out / "first_crossing.csv", table.first_crossing_csv()),
    ]
    if args.chi2:
        outputs.append(_write_text(out / "chi2_rates.csv", table.chi2_rates_csv()))
    if args.trajectories:
        outputs += _write_trajectories(out, table)

    cfg_dict = {
        "config_file": str(config_path),
        "pi_values": table.pi_values,
        "fp_levels": table.fp_levels,
        "reps": table.reps,
        "draws": table.draws,
        "master_seed": table.master_seed,
        "chi2": args.chi2,
    }
    write_manifest(out, build_manifest(
        "simulate", cfg_dict, [config_path], outputs, master_seed=table.master_seed
    ))
    print("pi      " + "  ".join(f"fp={fp:<6g}" for fp in table.fp_levels))
    for i, pi in enumerate(table.pi_values):
        print(f"{pi:<7g} " + "  ".join(f"{r:<9.3f}" for r in table.rates[i]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# attribute
# ---------------------------------------------------------------------------

def _read_history(run_dir: Path) -> list[tuple[int, int, float]]:
    traj = run_dir / "trajectory.csv"
    if not traj.exists():
        raise ValidationError(
            f"{traj} not found: rerun monitoring with --history on to enable attribution"
        )
    history = []
    with open(traj, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            history.append((int(row["t"]), int(row["category"]), float(row["log_psi"])))
    return history


def _grid_csv(scores, space: CategorySpace) -> str:
    import io

    names = list(space.api_names) + [""]
    m1 = len(names)
    grid = np.asarray(scores).reshape(m1, m1)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["parent"] + names)
    for i, name in enumerate(names):
        writer.writerow([name] + [_fmt(v) for v in grid[i]])
    return out.getvalue()


def _aggregate_csv(signed: dict) -> str:
    import io

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["api", "positive", "negative", "abs_total"])
    for label, (pos, neg) in signed.items():
        writer.writerow([label if label is not None else "",
                         _fmt(pos), _fmt(neg), _fmt(pos - neg)])
    return out.getvalue()


def _write_attribution_files(out: Path, report) -> list[Path]:
    outputs = [_write_json(out / "attribution.json", report.to_json_dict())]
    if report.space.mode == PAIR:
        outputs += [
            _write_text(out / "delta_grid.csv", _grid_csv(report.delta, report.space)),
            _write_text(out / "rho_grid.csv", _grid_csv(report.rho, report.space)),
            _write_text(out / "parent_scores.csv", _aggregate_csv(report.parent_scores_signed)),
            _write_text(out / "child_scores.csv", _aggregate_csv(report.child_scores_signed)),
        ]
    else:
        print("single-API run: parent/child aggregate files do not apply")
    return outputs


def cmd_attribute(args) -> int:
    run_dir = Path(args.run_dir)
    if args.top_k < 1:
        raise ValidationError("k must be >= 1")
    prior_path = run_dir / "prior.json"
    if not prior_path.exists():
        raise ValidationError(f"{prior_path} not found: is this a monitor run directory?")
    prior = PriorSpec.from_json(prior_path.read_text())
    history = _read_history(run_dir)
    report = attribution.report_from_history(
        prior, history, k=args.top_k, metric=args.metric,
        expected_from_prior_counts=args.expected_from_prior,
    )
    outputs = _write_attribution_files(run_dir, report)
    for entry in report.top:
        print(f"{entry.label}: score={entry.score:.4f} observed={entry.observed} "
              f"expected={entry.expected:.5f}")
    cfg = {"run_dir": str(run_dir), "k": args.top_k, "metric": args.metric}
    write_manifest(run_dir, build_manifest(
        "attribute", cfg, [run_dir / "trajectory.csv", prior_path], outputs
    ))
    return EXIT_OK


# ---------------------------------------------------------------------------
# report (figure rendering)
# ---------------------------------------------------------------------------

def _read_rates_csv(path: Path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        fp_levels = [float(h.removeprefix("fp_")) for h in header[1:]]
        pi_values, rates = [], []
        for row in reader:
            pi_values.append(float(row[0]))
            rates.append([float(v) for v in row[1:]])
    return pi_values, fp_levels, np.asarray(rates)


def _read_grid_csv(path: Path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return np.asarray([[float(v) for v in row[1:]] for row in reader])


def cmd_report(args) -> int:
    from . import plots  # heavy import, only the report path needs it

    run_dir = Path(args.run_dir)
    fig_dir = run_dir / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    made = []

    rates_path = run_dir / "detection_rates.csv"
    if rates_path.exists():
        pi_values, fp_levels, rates = _read_rates_csv(rates_path)
        made.append(plots.plot_detection_rates(
            pi_values, fp_levels, rates, fig_dir / "detection_rates.png"))
        for traj_path in sorted(run_dir.glob("trajectories_pi*.csv")):
            with open(traj_path, newline="") as fh:
                reader = csv.reader(fh)
                next(reader)
                rows = np.asarray([[float(v) for v in row[1:]] for row in reader])
            made.append(plots.plot_log_bf_trajectories(
                rows.T, fp_levels, fig_dir / (traj_path.stem + ".png"),
                title=traj_path.stem))

    alarms_path = run_dir / "alarms.json"
    traj_path = run_dir / "trajectory.csv"
    if alarms_path.exists() and traj_path.exists():
        meta = json.loads(alarms_path.read_text())
        with open(traj_path, newline="") as fh:
            reader = csv.DictReader(fh)
            log_bf = [float(row["log_bf"]) for row in reader]
        if log_bf:
            made.append(plots.plot_log_bf_trajectories(
                np.asarray([log_bf]), meta["fp_levels"],
                fig_dir / "trajectory.png", title="monitored log Bayes factor"))

    prior_path = run_dir / "prior.json"
    if prior_path.exists():
        space = PriorSpec.from_json(prior_path.read_text()).space
        for name, title in (("delta_grid", "per-step contribution by pair"),
                            ("rho_grid", "frequency log ratio by pair")):
            grid_path = run_dir / f"{name}.csv"
            if grid_path.exists():
                made.append(plots.plot_score_grid(
                    _read_grid_csv(grid_path), space, fig_dir / f"{name}.png", title))
        for name, title in (("parent_scores", "contribution by parent API"),
                            ("child_scores", "contribution by child API")):
            agg_path = run_dir / f"{name}.csv"
            if agg_path.exists():
                signed = {}
                with open(agg_path, newline="") as fh:
                    reader = csv.DictReader(fh)
                    for row in reader:
                        signed[row["api"] or None] = (float(row["positive"]),
                                                      float(row["negative"]))
                made.append(plots.plot_position_bars(signed, fig_dir / f"{name}.png", title))

    if not made:
        raise ValidationError(f"no reportable artifacts found under {run_dir}")
    cfg = {"run_dir": str(run_dir)}
    write_manifest(fig_dir, build_manifest("report", cfg, [], made))
    for path in made:
        print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# demo
# ---------------------------------------------------------------------------

def cmd_demo(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    space = demo.demo_space()
    baseline = demo.demo_baseline(space)
    drifted = demo.demo_drifted(space)

    outputs = [
        _write_text(out / "space.json", space.to_json() + "\n"),
        _write_text(out / "baseline_counts.json", baseline.to_json() + "\n"),
        _write_text(out / "baseline_matrix.csv", baseline.to_matrix_csv()),
        _write_text(out / "drifted_counts.json", drifted.to_json() + "\n"),
    ]

    lines = []
    ts = 0
    for (parent, child), count in sorted(demo.DEMO_BASELINE_PAIRS.items()):
        for _ in range(count):
            ts += 1
            lines.append(json.dumps({"ts": ts, "api": child, "parent": parent}))
    outputs.append(_write_text(out / "baseline_log.jsonl", "\n".join(lines) + "\n"))

    config_lines = [
        "[experiment]",
        'baseline = "baseline_counts.json"',
        'alternate = "drifted_counts.json"',
        "pi_values = [0.0, 0.05, 0.10, 0.20, 0.30, 1.0]",
        f"reps = {args.reps}",
        f"draws = {args.draws}",
        "fp_levels = [0.10, 0.05, 0.01]",
        f"master_seed = {args.seed}",
        "prior_weight = 50.0",
        "prior_floor = 0.00006",
    ]
    outputs.append(_write_text(out / "experiment.toml", "\n".join(config_lines) + "\n"))
    cfg = {"reps": args.reps, "draws": args.draws, "seed": args.seed}
    write_manifest(out, build_manifest("demo", cfg, [], outputs, master_seed=args.seed))
    print(f"demo data -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="apidrift", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("baseline", help="build a baseline frequency table from logs")
    p.add_argument("logs", nargs="+", type=Path)
    p.add_argument("--mode", choices=[SINGLE, PAIR], default=PAIR)
    p.add_argument("--format", choices=[JSONL, CSV], default=JSONL)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("monitor", help="stream a log through the detector")
    p.add_argument("log", help="log file path, or - for stdin")
    p.add_argument("--baseline", required=True, help="directory from the baseline command")
    p.add_argument("--format", choices=[JSONL, CSV], default=JSONL)
    p.add_argument("--fp", type=_fp_list, default=[0.10, 0.05, 0.01],
                   help="comma-separated false positive levels")
    p.add_argument("--forget", type=float, default=1.0, help="forgetting factor w in (0, 1]")
    p.add_argument("--prior-weight", type=float, default=DEFAULT_PRIOR_WEIGHT)
    p.add_argument("--floor", type=float, default=DEFAULT_FLOOR)
    p.add_argument("--prior-odds", type=float, default=None)
    p.add_argument("--history", choices=["on", "off"], default="on")
    p.add_argument("--continue", dest="keep_going", action="store_true",
                   help="keep monitoring after the strictest level alarms")
    p.add_argument("--chi2", action="store_true",
                   help="also export the naive sequential chi-squared trajectory")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("simulate", help="run the Monte Carlo detection-rate experiment")
    p.add_argument("-c", "--config", required=True, help="experiment TOML or JSON file")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--chi2", action="store_true",
                   help="also run the sequential chi-squared comparator on the same streams")
    p.add_argument("--trajectories", action="store_true", help="export per-rep log BF CSVs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("attribute", help="rank anomalous categories for a monitor run")
    p.add_argument("run_dir")
    p.add_argument("-k", "--top-k", type=int, default=10)
    p.add_argument("--metric", choices=["delta", "rho"], default="delta")
    p.add_argument("--expected-from-prior", action="store_true",
                   help="compare against raw prior pseudo-counts instead of "
                        "null expectation over the stop time")
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("report", help="render figures for a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("demo", help="write the bundled sample data and experiment config")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--seed", type=int, default=20260810)
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
