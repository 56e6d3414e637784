import argparse
import logging
import os
import sys
from typing import List, Optional

import numpy as np

from memcap.calibrate import CalibrationTargets, calibrate_params, calibration_summary
from memcap.characterize import characterize
from memcap.config import ExperimentConfig, load_config
from memcap.datasets import gen_synthetic_cochleograms, write_cochleograms
from memcap.energy import memcap_energy
from memcap.errors import (
    ConfigError,
    DatasetError,
    IntegrationDivergedError,
    InvalidInputError,
    MisalignedTraceError,
    SingularSystemError,
    SolverFailedError,
)
from memcap.html_report import format_html_report
from memcap.io import (
    atomic_write_text,
    read_trace_csv,
    train_from_trace,
    write_columns_csv,
    write_json,
    write_params_file,
    write_state_matrix_csv,
    write_trace_csv,
)
from memcap.readout import write_readout
from memcap.tasks import TASK_RUNNERS, TaskReport, run_task

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_args(args=None):
    """
    Parse command-line arguments for the memcap tool.
    """
    parser = _ArgumentParser(
        prog="memcap",
        description="Lipid-bilayer memcapacitor simulator and reservoir-computing benchmarks",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument(
        "-v", "--verbose", action="store_true", help="Log debug messages"
    )
    verbosity.add_argument(
        "-q", "--quiet", action="store_true", help="Only log warnings and errors"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None, help="Experiment INI file")
        p.add_argument(
            "--output-dir",
            type=str,
            default=None,
            help="Directory for reports and artifacts (default: experiment.output_dir)",
        )
        p.add_argument("--dt", type=float, default=None, help="Integration step, s")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="Override a config key (repeatable)",
        )
        p.add_argument(
            "--plot", action="store_true", help="Write PNG figures next to the report"
        )

    p = sub.add_parser("characterize", help="Run device fingerprint simulations")
    common(p)
    p.add_argument(
        "--params", type=str, default=None, help="Device parameter file (key = value)"
    )
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("run", help="Run a benchmark task")
    p.add_argument("task", choices=sorted(TASK_RUNNERS), help="Benchmark to run")
    common(p)
    p.add_argument("--seed", type=int, default=None, help="Root random seed")
    p.add_argument(
        "--jobs", type=int, default=None, help="Worker processes for reservoir lanes"
    )
    p.add_argument(
        "--no-integration",
        action="store_true",
        help="EEG: use plain virtual nodes instead of integrated features",
    )
    p.add_argument("--html", action="store_true", help="Write an HTML summary report")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("energy", help="Energy per spike of exported trace CSVs")
    p.add_argument("traces", nargs="+", help="Trace CSV files (t_s,v_V,...,C_over_C0)")
    p.add_argument(
        "--charge-factor",
        type=float,
        default=1.0,
        help="1.0 for C*dV^2, 0.5 for the stored-energy convention (default: 1.0)",
    )
    p.add_argument(
        "--dt",
        type=float,
        default=None,
        help=(
            "Integration step of the traces (default: largest step dividing every "
            "sample spacing; required when the spacings share none)"
        ),
    )
    p.add_argument(
        "--output", type=str, default="energy_report.json", help="JSON output file"
    )
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser(
        "gen-synthetic-cochleograms", help="Write a seeded synthetic cochleogram set"
    )
    p.add_argument("output", help="Directory for digit_<label>_<idx>.csv files")
    p.add_argument("--per-class", type=int, default=50, help="Examples per digit")
    p.add_argument("--seed", type=int, default=0, help="Random seed")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("calibrate", help="Derive device constants from targets")
    defaults = CalibrationTargets()
    for name in (
        "ratio",
        "v_ref",
        "compression",
        "tau_ew",
        "tau_ec",
        "R0",
        "W0",
        "eps",
        "a",
    ):
        p.add_argument(
            f"--{name.replace('_', '-')}",
            dest=name,
            type=float,
            default=getattr(defaults, name),
            help=f"(default: {getattr(defaults, name)})",
        )
    p.add_argument(
        "--output", type=str, default=None, help="Write the parameter file here"
    )
    p.set_defaults(func=cmd_calibrate)

    return parser.parse_args(args)


def _configure_logging(args) -> None:
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    cfg.apply_overrides(args.overrides)
    if args.dt is not None:
        cfg.set("device", "dt", args.dt)
    if args.output_dir is not None:
        cfg.set("experiment", "output_dir", args.output_dir)
    if getattr(args, "seed", None) is not None:
        cfg.set("experiment", "seed", args.seed)
    if getattr(args, "jobs", None) is not None:
        cfg.set("experiment", "jobs", args.jobs)
    if getattr(args, "no_integration", False):
        cfg.set("eeg", "integrate", "false")
    return cfg


def cmd_characterize(args) -> List[str]:
    cfg = _experiment_config(args)
    if args.params:
        cfg.set("device", "params_file", args.params)
    if not cfg.get_str("experiment", "seed"):
        cfg.set("experiment", "seed", 0)
    cfg.validate()
    params = cfg.params()
    out = os.path.join(cfg.output_dir, "characterize")
    runs = characterize(params, cfg.dt)

    paths = []
    summary = {"params": params.as_dict(), "calibration": calibration_summary(params)}
    for name, run in runs.items():
        summary[name] = run.summary
        if run.trace is not None:
            path = os.path.join(out, f"{name}.csv")
            write_trace_csv(path, run.trace)
            paths.append(path)
        if run.curve:
            path = os.path.join(out, f"{name}.csv")
            write_columns_csv(path, run.curve)
            paths.append(path)
    summary_path = os.path.join(out, "summary.json")
    write_json(summary_path, summary)
    paths.append(summary_path)
    if args.plot:
        from memcap.plot import plot_hysteresis

        path = os.path.join(out, "hysteresis.png")
        plot_hysteresis(runs["hysteresis"].trace, path)
        paths.append(path)
    return paths


def _write_report(report: TaskReport, out: str, plot: bool, html: bool) -> List[str]:
    paths = []
    report_path = os.path.join(out, "report.json")
    write_json(report_path, report.as_dict())
    paths.append(report_path)
    timing_path = os.path.join(out, "timing.json")
    write_json(timing_path, {"wall_time_s": report.wall_time_s})
    paths.append(timing_path)

    sm = report.state_matrix
    if sm is not None:
        path = os.path.join(out, "state_matrix.csv")
        write_state_matrix_csv(path, sm.values, sm.columns, sm.row_labels)
        paths.append(path)
    if report.readout is not None:
        paths.extend(write_readout(os.path.join(out, "readout"), report.readout))
    for name, columns in report.tables.items():
        path = os.path.join(out, f"{name}.csv")
        write_columns_csv(path, columns)
        paths.append(path)

    images = []
    if plot:
        from memcap.plot import plot_confusion, plot_series

        if report.confusion is not None:
            path = os.path.join(out, "confusion.png")
            plot_confusion(
                report.confusion.confusion,
                report.confusion.classes,
                path,
                title=f"Confusion Matrix ({report.task})",
            )
            images.append({"title": "Confusion matrix", "path": "confusion.png"})
            paths.append(path)
        if "predictions" in report.tables:
            table = report.tables["predictions"]
            test = np.asarray(table["split"]) == "test"
            path = os.path.join(out, "predictions.png")
            plot_series(table["y_true"][test], table["y_pred"][test], path)
            images.append({"title": "Test predictions", "path": "predictions.png"})
            paths.append(path)
    if html:
        path = os.path.join(out, "report.html")
        atomic_write_text(path, format_html_report(report.as_dict(), images))
        paths.append(path)
    return paths


def cmd_run(args) -> List[str]:
    cfg = _experiment_config(args)
    if cfg.task and cfg.task != args.task:
        logger.info("config names task %s; running %s", cfg.task, args.task)
    cfg.set("experiment", "task", args.task)
    cfg.validate()
    report = run_task(args.task, cfg)
    out = os.path.join(cfg.output_dir, args.task)
    return _write_report(report, out, args.plot, args.html)


def cmd_energy(args) -> List[str]:
    results = {}
    for path in args.traces:
        trace = read_trace_csv(path, dt=args.dt)
        train = train_from_trace(trace)
        report = memcap_energy(trace, train, args.charge_factor)
        logger.info(
            "%s: %.4g J per spike over %d spikes", path, report.energy_per_spike,
            report.spike_count,
        )
        results[path] = report.as_dict()
    write_json(args.output, results)
    return [args.output]


def cmd_gen_synthetic(args) -> List[str]:
    cochleograms = gen_synthetic_cochleograms(args.per_class, args.seed)
    write_cochleograms(args.output, cochleograms)
    logger.info("wrote %d cochleograms to %s", len(cochleograms), args.output)
    return [args.output]


def cmd_calibrate(args) -> List[str]:
    targets = CalibrationTargets(
        a=args.a,
        eps=args.eps,
        R0=args.R0,
        W0=args.W0,
        ratio=args.ratio,
        v_ref=args.v_ref,
        compression=args.compression,
        tau_ew=args.tau_ew,
        tau_ec=args.tau_ec,
    )
    params = calibrate_params(targets)
    summary = calibration_summary(params)
    for key, value in sorted(summary.items()):
        print(f"{key}: {value}")
    if args.output is None:
        return []
    comments = [
        f"calibrated: C_ss/C0 = {targets.ratio} at {targets.v_ref} V, "
        f"compression {targets.compression}",
        f"tau_ew = {targets.tau_ew} s, tau_ec = {targets.tau_ec} s",
    ]
    write_params_file(args.output, params, comments)
    return [args.output]


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main function to run the memcap tool from the command line.
    """
    args = parse_args(argv)
    _configure_logging(args)
    try:
        paths = args.func(args)
    except (
        ConfigError,
        DatasetError,
        InvalidInputError,
        MisalignedTraceError,
    ) as exc:
        print(f"memcap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (
        IntegrationDivergedError,
        SolverFailedError,
        SingularSystemError,
        ArithmeticError,
    ) as exc:
        print(f"memcap: numerical failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
