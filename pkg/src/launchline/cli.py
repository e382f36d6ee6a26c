"""Command-line entry point: ``launchline <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, report
from .calendar import (
    Calendar,
    build_calendar,
    regular_calendar,
    validate_calendar,
)
from .mdp import (
    N_STATES,
    NormalizationError,
    check_normalized,
    extract_deterministic_policy,
    load_policy,
    load_tensor,
    save_policy,
    save_tensor,
)
from .optim import (
    BENCHMARK_RATE_RANGE,
    LauncherEvaluator,
    McResult,
    compare_capacities,
    default_workers,
    load_params,
    make_setup,
    monte_carlo_costs,
    run_algo,
    stream,
)
from .simulator import TRACE_COLUMNS, DeadlockError, SimConfig, simulate_horizon

log = logging.getLogger("launchline")

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_SCHEMA = 4
EXIT_INVALID_CALENDAR = 5
EXIT_RUNTIME = 6

STREAM_CALENDAR = 10


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read(path: str, what: str, loader):
    p = Path(path)
    if not p.is_file():
        raise CliError(f"cannot read {what} file {path}: no such file", EXIT_IO)
    try:
        return loader(p)
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(f"cannot read {what} file {path}: {exc}", EXIT_IO) from exc
    except (ValueError, TypeError, KeyError) as exc:
        raise CliError(f"invalid {what} file {path}: {exc}", EXIT_SCHEMA) from exc


def _calendar(arg: str) -> Calendar:
    if arg == "benchmark":
        return regular_calendar(10, 10)
    cal = _read(arg, "calendar", Calendar.load)
    report_ = validate_calendar(cal)
    if not report_.ok:
        raise CliError(f"calendar {arg} is not admissible: " + "; ".join(report_.violations),
                       EXIT_INVALID_CALENDAR)
    return cal


def _config(args) -> SimConfig:
    cfg = _read(args.config, "config", SimConfig.load) if args.config else SimConfig()
    if getattr(args, "capacity", None) is not None:
        cfg = cfg.with_capacity(args.capacity)
    return cfg


def _rate_range(args) -> tuple[int, int]:
    lo, hi = BENCHMARK_RATE_RANGE if args.calendar == "benchmark" else (6, 12)
    lo = args.min_rate if args.min_rate is not None else lo
    hi = args.max_rate if args.max_rate is not None else hi
    if not 6 <= lo <= hi <= 12:
        raise CliError(f"rate range {lo}..{hi} must lie within 6..12", EXIT_USAGE)
    return lo, hi


def _policy(choice: str, setup) -> np.ndarray:
    if choice == "naive":
        return setup.naive
    if choice.startswith("fixed:"):
        try:
            n = int(choice.split(":", 1)[1])
            return setup.fixed_rate_policy(n)
        except ValueError as exc:
            raise CliError(f"bad fixed policy {choice!r}: {exc}", EXIT_USAGE) from exc
    pol, meta = _read(choice, "policy", load_policy)
    if pol.shape != (setup.calendar.horizon_years, N_STATES):
        raise CliError(f"policy {choice} has shape {pol.shape}, calendar needs "
                       f"({setup.calendar.horizon_years}, {N_STATES})", EXIT_SCHEMA)
    if meta["srm_capacity"] != setup.config.srm_capacity:
        log.warning("policy was built for SRM capacity %s, simulating capacity %s",
                    meta["srm_capacity"], setup.config.srm_capacity)
    return pol


def _outdir(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {path}: {exc}", EXIT_IO) from exc
    return p


# -- commands ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    cal = _calendar(args.calendar)
    setup = make_setup(cal, _config(args), _rate_range(args))
    pol = _policy(args.policy, setup)
    out = _outdir(args.out)
    res = simulate_horizon(pol, cal, setup.config, seed=args.seed, trace=out is not None)
    print(f"total cost: {res.total:.2f}")
    for t, c in enumerate(res.per_year, start=1):
        print(f"year {t:>2}: storage {c.storage:>12.2f}  anticipated {c.anticipated_lateness:>10.2f}  "
              f"unexpected {c.unexpected_lateness:>10.2f}  penalty {c.penalty:>12.2f}")
    if out:
        report.write_per_year(out / "per_year.csv", res.per_year)
        report.write_csv(out / "trace.csv", TRACE_COLUMNS, res.trace.tolist())
        if not args.no_figures:
            report.plot_trace(out / "trace.png", res.trace, setup.config.year_ticks)
    return 0


def cmd_evaluate(args) -> int:
    cal = _calendar(args.calendar)
    setup = make_setup(cal, _config(args), _rate_range(args))
    pol = _policy(args.policy, setup)
    ev = LauncherEvaluator(cal, setup.config, args.workers)
    c = monte_carlo_costs(pol, args.samples, ev, args.seed)
    r = McResult(float(c.mean()), float(c.std(ddof=1)) if args.samples > 1 else 0.0, args.samples)
    lo, hi = r.ci95
    print(f"mean cost: {r.mean:.2f}")
    print(f"95% CI: [{lo:.2f}, {hi:.2f}]  (M = {r.samples})")
    out = _outdir(args.out)
    if out:
        report.write_csv(out / "evaluation.csv", ("policy", "mean_cost", "ci_low", "ci_high", "samples"),
                         [(args.policy, r.mean, lo, hi, r.samples)])
    return 0


def _params(args):
    try:
        params = load_params(args.params, args.algo) if args.params else load_params(None, args.algo)
    except FileNotFoundError as exc:
        raise CliError(f"cannot read params file {args.params}: no such file", EXIT_IO) from exc
    except (ValueError, TypeError) as exc:
        raise CliError(f"invalid params file {args.params}: {exc}", EXIT_SCHEMA) from exc
    if args.iterations is not None:
        params.K = args.iterations
    try:
        params.validate()
    except ValueError as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from exc
    return params


def cmd_optimize(args) -> int:
    cal = _calendar(args.calendar)
    setup = make_setup(cal, _config(args), _rate_range(args))
    params = _params(args)
    out = _outdir(args.out)
    if args.init:
        P0 = _read(args.init, "probability tensor", load_tensor)
        if P0.shape[:2] != (cal.horizon_years, N_STATES):
            raise CliError(f"tensor {args.init} has shape {P0.shape}", EXIT_SCHEMA)
        try:
            check_normalized(P0)
        except NormalizationError as exc:
            raise CliError(f"tensor {args.init}: {exc}", EXIT_SCHEMA) from exc
    else:
        P0 = setup.initial_tensor(args.warm_start)
    ev = LauncherEvaluator(cal, setup.config, args.workers)
    res = run_algo(args.algo, params, P0, ev, args.seed,
                   checkpoint_dir=out / "checkpoints" if args.checkpoint_every else None,
                   checkpoint_every=args.checkpoint_every)
    policy = extract_deterministic_policy(res.P)
    save_tensor(out / "P_final.lipt", res.P)
    save_policy(out / "policy.json", policy, setup.config.srm_capacity)
    report.write_history(out / "history.csv", res.history, timestamps=not args.no_timestamps)
    lines = [f"algorithm: {args.algo}", f"iterations: {params.K}", f"seed: {args.seed}",
             f"srm capacity: {setup.config.srm_capacity}"]
    if res.history:
        lines.append(f"best sampled cost: {res.best_cost:.2f}")
    if args.final_samples:
        for name, pol in (("naive", setup.naive), ("optimized", policy)):
            c = monte_carlo_costs(pol, args.final_samples, ev, args.seed)
            lines.append(f"{name} policy mean cost (M = {args.final_samples}): {c.mean():.2f}")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    print(text, end="")
    if res.history and not args.no_figures:
        report.plot_history(out / "history.png", res.history, args.algo.upper())
    return 0


def cmd_compare(args) -> int:
    cal = _calendar(args.calendar)
    cfg = _config(args)
    params = _params(args)
    out = _outdir(args.out)
    rows = compare_capacities(args.algo, params, cal, cfg, args.seed, eval_samples=args.samples,
                              workers=args.workers, warm_mass=args.warm_start,
                              rate_range=_rate_range(args))
    table = report.compare_table(rows)
    print(table)
    if out:
        report.write_compare(out / "compare.csv", rows)
        (out / "compare.txt").write_text(table + "\n")
        if not args.no_figures:
            report.plot_compare(out / "compare.png", rows)
    return 0


def cmd_calendar_gen(args) -> int:
    if args.horizon < 1:
        raise CliError("--horizon must be >= 1", EXIT_USAGE)
    if args.regular is not None:
        cal = regular_calendar(args.horizon, args.regular)
    else:
        cal = build_calendar(args.horizon, stream(args.seed, STREAM_CALENDAR))
    try:
        cal.save(args.out)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from exc
    print(f"wrote {args.out}: {cal.horizon_years} years, {cal.total_launches} launches")
    return 0


def cmd_calendar_check(args) -> int:
    cal = _read(args.file, "calendar", Calendar.load)
    rep = validate_calendar(cal)
    if rep.ok:
        print(f"{args.file}: ok ({cal.horizon_years} years, {cal.total_launches} launches)")
        return 0
    for v in rep.violations:
        print(f"{args.file}: {v}", file=sys.stderr)
    return EXIT_INVALID_CALENDAR


# -- parser ------------------------------------------------------------------

def _add_setup(p, capacity=True):
    p.add_argument("--calendar", default="benchmark",
                   help="calendar JSON file, or 'benchmark' for the 10-year regular calendar")
    p.add_argument("--config", help="simulator config JSON (defaults built in)")
    if capacity:
        p.add_argument("--capacity", type=int, choices=(4, 8), help="SRM storage capacity")
    p.add_argument("--min-rate", type=int, help="fewest launchers a year an action may target")
    p.add_argument("--max-rate", type=int, help="most launchers a year an action may target")
    p.add_argument("--seed", type=int, default=0)


def _add_optim(p):
    p.add_argument("--algo", choices=("mras", "asa"), default="asa")
    p.add_argument("--params", help="optimizer parameter JSON")
    p.add_argument("--iterations", type=int, help="override the iteration count K")
    p.add_argument("--warm-start", type=float, default=0.0,
                   help="probability mass put on the naive action in the initial tensor")
    p.add_argument("--workers", type=int, default=default_workers())
    p.add_argument("--no-figures", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="launchline", description=__doc__)
    ap.add_argument("--version", action="version", version=f"launchline {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one trajectory and print its costs")
    _add_setup(p)
    p.add_argument("--policy", default="naive", help="'naive', 'fixed:N' or a policy JSON file")
    p.add_argument("--out", help="directory for per-year and trace CSVs")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="Monte Carlo mean cost with a 95%% interval")
    _add_setup(p)
    p.add_argument("--policy", default="naive")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--workers", type=int, default=default_workers())
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", help="run MRAS or ASA")
    _add_setup(p)
    _add_optim(p)
    p.add_argument("--init", help="initial probability tensor checkpoint")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--final-samples", type=int, default=0,
                   help="evaluate the naive and extracted policies with this many trajectories")
    p.add_argument("--no-timestamps", action="store_true", help="leave wall times out of history.csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("compare", help="naive vs optimized for SRM capacity 4 and 8")
    _add_setup(p, capacity=False)
    _add_optim(p)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare, warm_start=0.5)

    p = sub.add_parser("calendar-gen", help="sample a launch calendar")
    p.add_argument("--horizon", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--regular", type=int, help="use this count every post-startup year")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calendar_gen)

    p = sub.add_parser("calendar-check", help="validate a calendar file")
    p.add_argument("file")
    p.set_defaults(func=cmd_calendar_check)
    return ap


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for flag in ("samples", "workers", "final_samples", "checkpoint_every"):
        v = getattr(args, flag, None)
        if v is not None and v < (1 if flag in ("samples", "workers") else 0):
            print(f"launchline: error: --{flag.replace('_', '-')} out of range: {v}", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"launchline: error: {exc}", file=sys.stderr)
        return exc.code
    except (DeadlockError, RuntimeError) as exc:
        print(f"launchline: simulation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
