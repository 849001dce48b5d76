"""Command-line entry point: ``abba <command> ...``.

Exit codes: 0 success, 2 input or configuration error, 3 estimation undefined.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field

from . import __version__
from .bootstrap import BootstrapConfig, bootstrap_ci, estimate
from .calibration import CalibrationModel, annotate_soft
from .calibration import fit as fit_calibration
from .data import ArmTraffic, Dataset, Thresholds, build_counts, ingest
from .estimators import RatioEstimate, SweepRow, threshold_sweep
from .exceptions import AbbaError, BootstrapError, MissingSoftLabelError, UndefinedRatioError
from .sampling import load_strata, neyman_allocate
from .simulation import AbbaSimConfig, SsSimConfig, simulate_abba, simulate_ss, write_simulation

logger = logging.getLogger("abba")

EXIT_OK, EXIT_INPUT, EXIT_UNDEFINED = 0, 2, 3

_METHOD_ESTIMATORS = {
    "direct": ("rrecall_direct", "rfpr_direct"),
    "approx": ("rrecall_approx", "rfpr_approx"),
    "abtest": ("rfpr_abtest",),
}


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        self.code = code
        super().__init__(message)


@dataclass
class Report:
    """Machine-readable result of one command."""

    command: str
    config_digest: str
    seed: int | None = None
    version: str = __version__
    estimates: list[RatioEstimate] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    excluded: int = 0
    sweep: list[SweepRow] | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "meta": {"command": self.command, "config_digest": self.config_digest,
                     "seed": self.seed, "version": self.version},
            "estimates": [e.to_dict() for e in self.estimates],
            "warnings": list(self.warnings),
            "excluded": self.excluded,
            "sweep": None if self.sweep is None else [r.to_dict() for r in self.sweep],
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        meta = d["meta"]
        return cls(
            command=meta["command"], config_digest=meta["config_digest"],
            seed=meta["seed"], version=meta["version"],
            estimates=[RatioEstimate.from_dict(e) for e in d["estimates"]],
            warnings=list(d["warnings"]), excluded=d["excluded"],
            sweep=None if d["sweep"] is None else [SweepRow.from_dict(r) for r in d["sweep"]],
            extra=d["extra"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls.from_dict(json.loads(text))

    def to_table(self) -> str:
        lines = [f"# {self.command}  (abba {self.version}, seed={self.seed}, digest={self.config_digest[:12]})"]
        if self.estimates:
            lines.append(f"{'metric':<8} {'method':<16} {'point':>9}  interval")
            for e in self.estimates:
                ci = f"[{e.ci_low:.4f}, {e.ci_high:.4f}] @ {e.ci_level:g}" if e.has_ci else "-"
                lines.append(f"{e.metric:<8} {e.method:<16} {e.point:>9.4f}  {ci}")
        if self.sweep is not None:
            lines.append(f"{'t_B':>8} {'FPR Ratio':>26} {'Recall Ratio':>26}  region")
            for r in self.sweep:
                lines.append(f"{r.t_B:>8.4g} {str(r.rFPR):>26} {str(r.rRecall):>26}  {r.region.value}")
        for key, value in self.extra.items():
            lines.append(f"{key}: {json.dumps(value, sort_keys=True)}")
        if self.excluded:
            lines.append(f"excluded (unlabelled) records: {self.excluded}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines)


# ---------------------------------------------------------------- helpers

def _digest(args: argparse.Namespace, *paths) -> str:
    h = hashlib.sha256()
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "format", "output", "model_output")}
    h.update(json.dumps(opts, sort_keys=True, default=str).encode())
    for p in paths:
        if p:
            with open(p, "rb") as fh:
                h.update(hashlib.sha256(fh.read()).digest())
    return h.hexdigest()


def _load_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {what} {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{what} {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None


def _ingest(path) -> Dataset:
    try:
        return ingest(path)
    except OSError as exc:
        raise CliError(f"cannot read input {path}: {exc.strerror}") from None


def _bootstrap_config(args) -> BootstrapConfig | None:
    if args.bootstrap <= 0:
        return None
    if args.seed is None:
        raise CliError("--seed is required when --bootstrap > 0 (use --bootstrap 0 for point estimates)")
    try:
        return BootstrapConfig(seed=args.seed, replicates=args.bootstrap, level=args.level)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _emit(report: Report, args) -> None:
    text = report.to_json() if args.format == "json" else report.to_table()
    print(text)
    if getattr(args, "output", None):
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")


def _estimate_one(name, dataset, thresholds, config, traffic=None) -> RatioEstimate:
    if config is None:
        return estimate(name, dataset, thresholds, traffic)
    return bootstrap_ci(dataset, thresholds, name, config, traffic)


def _parse_grid(spec: str) -> list[float]:
    try:
        lo, hi, step = (float(x) for x in spec.split(":"))
    except ValueError:
        raise CliError(f"--tb-grid must be lo:hi:step, got {spec!r}") from None
    if step <= 0 or hi < lo:
        raise CliError("--tb-grid needs step > 0 and hi >= lo")
    n = int(round((hi - lo) / step)) + 1
    return [round(lo + k * step, 12) for k in range(n) if lo + k * step <= hi + 1e-9 * step]


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    raw = _load_json(args.config, "config")
    if args.kind == "abba":
        config = AbbaSimConfig.from_dict(raw)
        dataset, traffic, truth = simulate_abba(config)
        sidecar = {"kind": "abba", "config": config.to_dict(), "traffic": traffic.to_dict(),
                   "ground_truth": truth}
    else:
        config = SsSimConfig.from_dict(raw)
        dataset = simulate_ss(config)
        sidecar = {"kind": "ss", "config": config.to_dict(), "expected": config.expected}
    meta_path = write_simulation(dataset, args.output, sidecar)
    n_a, n_b = dataset.arm_sizes()
    summary = {"records": {"A": n_a, "B": n_b}, "output": os.fspath(args.output), "sidecar": meta_path}
    if args.kind == "abba":
        summary.update(traffic=traffic.to_dict(), ground_truth=truth)
    else:
        summary.update(expected=config.expected)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_estimate(args) -> int:
    methods = args.method or ["direct", "approx"]
    if "abtest" in methods and not args.traffic:
        raise CliError("--method abtest requires --traffic")
    dataset = _ingest(args.input)
    thresholds = Thresholds(args.ta, args.tb)
    config = _bootstrap_config(args)
    traffic = None
    if args.traffic:
        raw = _load_json(args.traffic, "traffic")
        raw = raw.get("traffic", raw)  # accept a simulation sidecar as well
        try:
            traffic = ArmTraffic.from_dict(raw)
        except (KeyError, TypeError, ValueError):
            raise CliError("traffic file must contain streams_A and streams_B") from None
        traffic.check(dataset)

    report = Report("estimate", _digest(args, args.input, args.traffic), seed=args.seed if config else None)
    report.excluded = build_counts(dataset, thresholds).n_excluded
    defined = {"rRecall": False, "rFPR": False}
    requested = set()
    for method in methods:
        for name in _METHOD_ESTIMATORS[method]:
            metric = "rRecall" if name.startswith("rrecall") else "rFPR"
            requested.add(metric)
            try:
                e = _estimate_one(name, dataset, thresholds, config, traffic)
            except UndefinedRatioError as exc:
                hint = " (try --method approx)" if method == "direct" else ""
                report.warnings.append(f"{exc}{hint}")
                continue
            except BootstrapError as exc:
                report.warnings.append(str(exc))
                continue
            report.estimates.append(e)
            defined[metric] = True
    _emit(report, args)
    missing = [m for m in sorted(requested) if not defined[m]]
    if missing:
        print(f"error: no defined estimate for {', '.join(missing)}", file=sys.stderr)
        return EXIT_UNDEFINED
    return EXIT_OK


def cmd_ss_estimate(args) -> int:
    dataset = _ingest(args.input)
    thresholds = Thresholds(args.ta, args.tb)
    config = _bootstrap_config(args)
    if bool(args.calibration) != bool(args.machine_scores):
        raise CliError("--calibration and --machine-scores must be given together")
    if args.calibration:
        try:
            model = CalibrationModel.load(args.calibration)
        except (OSError, KeyError, ValueError) as exc:
            raise CliError(f"cannot load calibration model: {exc}") from None
        scores = _load_json(args.machine_scores, "machine scores")
        try:
            dataset = annotate_soft(dataset, model, scores)
        except KeyError as exc:
            raise CliError(str(exc.args[0]), EXIT_UNDEFINED) from None
    report = Report("ss-estimate", _digest(args, args.input, args.calibration, args.machine_scores),
                    seed=args.seed if config else None)
    code = EXIT_OK
    for name in ("ss_rrecall", "ss_rfpr"):
        try:
            report.estimates.append(_estimate_one(name, dataset, thresholds, config))
        except MissingSoftLabelError as exc:
            raise CliError(str(exc), EXIT_UNDEFINED) from None
        except (UndefinedRatioError, BootstrapError) as exc:
            report.warnings.append(str(exc))
            code = EXIT_UNDEFINED
    _emit(report, args)
    return code


def cmd_calibrate(args) -> int:
    dataset = _ingest(args.input)
    scores = _load_json(args.machine_scores, "machine scores")
    pairs, weights = [], []
    for rec in dataset:
        if rec.hard_label is None or rec.id not in scores:
            continue
        pairs.append((float(scores[rec.id]), rec.hard_label))
        weights.append(rec.sampling_weight)
    try:
        model = fit_calibration(pairs, weights if args.weighted else None)
    except ValueError as exc:
        raise CliError(f"calibration failed: {exc}") from None
    model.save(args.model_output)
    report = Report("calibrate", _digest(args, args.input, args.machine_scores))
    report.extra = {"model": json.loads(model.to_json()), "pairs": len(pairs), "output": args.model_output}
    if not model.monotone_on_domain:
        report.warnings.append("fitted cubic is not monotone on the score range")
    _emit(report, args)
    return EXIT_OK


def cmd_allocate(args) -> int:
    if not os.path.exists(args.strata):
        raise CliError(f"strata file {args.strata} not found")
    strata = load_strata(args.strata)
    plan = neyman_allocate(args.budget, strata, overall_p=args.overall_p)
    report = Report("allocate", _digest(args, args.strata))
    report.extra = {"plan": plan.to_dict()}
    _emit(report, args)
    return EXIT_OK


def cmd_sweep(args) -> int:
    dataset = _ingest(args.input)
    grid = _parse_grid(args.tb_grid)
    config = _bootstrap_config(args)
    report = Report("sweep", _digest(args, args.input), seed=args.seed if config else None)
    try:
        report.sweep = threshold_sweep(dataset, args.ta, grid, method=args.method,
                                       deployed_t_B=args.deployed_tb, bootstrap=config)
    except ValueError as exc:
        if isinstance(exc, AbbaError):
            raise
        raise CliError(str(exc)) from None
    _emit(report, args)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_bootstrap(p, default=1000):
    p.add_argument("--bootstrap", type=int, default=default, metavar="N",
                   help=f"bootstrap replicates, 0 disables intervals (default {default})")
    p.add_argument("--level", type=float, default=0.95, help="interval level (default 0.95)")
    p.add_argument("--seed", type=int, default=None, help="bootstrap seed (required if --bootstrap > 0)")


def _add_common(p):
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.add_argument("--output", default=None, help="also write the JSON report here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abba", description="Relative recall / FPR analysis of two KWS models.")
    parser.add_argument("--version", action="version", version=f"abba {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a simulated dataset")
    p.add_argument("kind", choices=("abba", "ss"))
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True, help="record file; sidecar goes to <output>.meta.json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="supervised rRecall / rFPR")
    p.add_argument("--input", required=True)
    p.add_argument("--ta", type=float, required=True)
    p.add_argument("--tb", type=float, required=True)
    p.add_argument("--method", action="append", choices=tuple(_METHOD_ESTIMATORS),
                   help="repeatable; default direct and approx")
    p.add_argument("--traffic", help="JSON with streams_A / streams_B (needed by abtest)")
    _add_bootstrap(p)
    _add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("ss-estimate", help="semi-supervised rRecall / rFPR from soft labels")
    p.add_argument("--input", required=True)
    p.add_argument("--ta", type=float, required=True)
    p.add_argument("--tb", type=float, required=True)
    p.add_argument("--calibration", help="calibration model JSON")
    p.add_argument("--machine-scores", help="JSON object mapping record id to machine score")
    _add_bootstrap(p)
    _add_common(p)
    p.set_defaults(func=cmd_ss_estimate)

    p = sub.add_parser("calibrate", help="fit the cubic score-to-probability map")
    p.add_argument("--input", required=True, help="record file with hard labels")
    p.add_argument("--machine-scores", required=True)
    p.add_argument("--model-output", required=True)
    p.add_argument("--weighted", action="store_true", help="weight pairs by sampling_weight")
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("allocate", help="Neyman allocation of an annotation budget")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--strata", required=True)
    p.add_argument("--overall-p", type=float, default=None,
                   help="overall FPR for the efficiency figure (default: pooled from strata)")
    _add_common(p)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("sweep", help="ratios over a grid of thresholds for B")
    p.add_argument("--input", required=True)
    p.add_argument("--ta", type=float, required=True)
    p.add_argument("--tb-grid", required=True, metavar="LO:HI:STEP")
    p.add_argument("--method", choices=("direct", "approx"), default="direct")
    p.add_argument("--deployed-tb", type=float, default=None,
                   help="threshold B was deployed with (default: lowest B collector score)")
    _add_bootstrap(p, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (UndefinedRatioError, BootstrapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNDEFINED
    except (AbbaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
