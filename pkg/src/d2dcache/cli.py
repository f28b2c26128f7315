"""Command-line entry point: experiments, single trials, complexity tables, self-test."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import complexity
from .channel import ScenarioConfig, load_config
from .combinatorics import ParameterError
from .simrunner import SCHEMES, experiment_csv, run_experiment, run_trial, selftest

log = logging.getLogger("d2dcache")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _config(args) -> ScenarioConfig:
    if args.config is None:
        return ScenarioConfig()
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    return load_config(path)


def _values(text: str):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            out.append(int(item) if item.lstrip("+-").isdigit() else float(item))
        except ValueError:
            raise UsageError(f"bad value {item!r} in --values") from None
    if not out:
        raise UsageError("--values is empty")
    return out


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    cfg = _config(args)
    if (args.sweep is None) != (args.values is None):
        raise UsageError("--sweep and --values go together")
    values = _values(args.values) if args.values else []
    if args.sweep is not None and args.sweep not in ScenarioConfig.__dataclass_fields__:
        raise UsageError(f"unknown sweep variable {args.sweep!r}")

    def progress(value, scheme, t):
        log.info("%s=%s %s trial %d", args.sweep, value, scheme, t)

    rows = run_experiment(cfg, args.sweep, values, args.trials, args.seed, args.scheme, progress=progress)
    _emit(experiment_csv(rows), args.out)
    return EXIT_OK if all(r["n_ok"] > 0 for r in rows) else EXIT_FAIL


def cmd_trial(args) -> int:
    cfg = _config(args)
    schemes = args.scheme or list(SCHEMES)
    status = EXIT_OK
    lines = []
    for scheme in schemes:
        rep = run_trial(cfg, args.seed, scheme)
        lines.extend(rep.lines())
        lines.append("")
        if not rep.ok:
            status = EXIT_FAIL
    _emit("\n".join(lines), args.out)
    return status


def cmd_complexity(args) -> int:
    i_values = _values(args.values) if args.values else None
    rows = complexity.sweep(args.tau, args.L, i_values, args.m, args.alpha, args.beta, args.P)
    _emit(complexity.sweep_csv(rows), args.out)
    return EXIT_OK


def cmd_selftest(args) -> int:
    failed = 0
    for name, ok, detail in selftest():
        print(f"{'PASS' if ok else 'FAIL'} {name}" + ("" if ok else f": {detail}"))
        failed += not ok
    return EXIT_OK if not failed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="d2dcache", description="D2D-assisted multi-antenna coded caching simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials=True):
        sp.add_argument("--config", help="key = value scenario file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--scheme", action="append", choices=SCHEMES, help="repeat for several schemes")
        sp.add_argument("--out", help="write output here instead of stdout")
        if trials:
            sp.add_argument("--trials", type=int, default=200)

    run = sub.add_parser("run", help="Monte Carlo experiment, CSV output")
    common(run)
    run.add_argument("--sweep", help="config field to vary, e.g. inner_radius_m")
    run.add_argument("--values", help="comma-separated sweep values")
    run.set_defaults(func=cmd_run)

    trial = sub.add_parser("trial", help="one channel draw, verbose report")
    common(trial, trials=False)
    trial.set_defaults(func=cmd_trial)

    cx = sub.add_parser("complexity", help="design-size bounds versus offloaded groups")
    cx.add_argument("--tau", type=int, required=True)
    cx.add_argument("--L", type=int, required=True)
    cx.add_argument("--m", type=int, default=0)
    cx.add_argument("--alpha", type=int)
    cx.add_argument("--beta", type=int)
    cx.add_argument("--P", type=int)
    cx.add_argument("--values", help="comma-separated i values (default: all)")
    cx.add_argument("--out")
    cx.set_defaults(func=cmd_complexity)

    st = sub.add_parser("selftest", help="check the worked examples")
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on bad flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "trials", 1) < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
