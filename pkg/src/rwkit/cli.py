"""Command-line entry point: ``rwkit {validate,simulate,calibrate,report}``.

Exit codes: 0 success, 1 the pipeline ran but some target date was missed by
more than three standard errors, 2 bad input or a failed stage.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .exceptions import RwkitError, StageError
from .mc_engine import THREADS_ENV
from .scenario import (
    calibrate_scenario,
    emit_reports,
    emit_rn_reports,
    load_scenario,
    make_estimator,
    run_scenario,
    with_overrides,
    write_alpha_csv,
)

EXIT_OK, EXIT_MISSED, EXIT_ERROR = 0, 1, 2


def _cmd_validate(args) -> int:
    spec = load_scenario(args.config)
    print(f"ok: {spec.name} ({spec.scenario_kind}, {spec.target_fill}), "
          f"{len(spec.targets)} targets -> {len(spec.expanded)} grid targets, "
          f"{spec.n_paths} paths, seed {spec.seed}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    spec = with_overrides(load_scenario(args.config), args.paths, args.seed, args.out)
    est = make_estimator(spec).simulate()
    files = emit_rn_reports(est, spec)
    for name, path in files.items():
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    spec = with_overrides(load_scenario(args.config), output_dir=args.out)
    est = calibrate_scenario(spec)
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_alpha_csv(out / "alpha.csv", est.alpha_, est.f_at_knots_)
    print(f"wrote {out / 'alpha.csv'} ({est.alpha_.values.size} steps)")
    return EXIT_OK


def _cmd_report(args) -> int:
    spec = with_overrides(load_scenario(args.config), output_dir=args.out)
    bundle = run_scenario(spec)
    files = emit_reports(bundle, spec)
    for path in files.values():
        print(f"wrote {path}")
    for w in bundle.warnings:
        print(f"warning: {w}", file=sys.stderr)
    hit, total = int(bundle.hit.sum()), bundle.hit.size
    print(f"targets within 3 SE: {hit}/{total}")
    return EXIT_OK if bundle.success else EXIT_MISSED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rwkit",
        description="Real-world CIR++ credit scenarios from risk-neutral simulations.",
        epilog=f"{THREADS_ENV} caps the number of simulation worker threads.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("simulate", help="risk-neutral ensemble tables only")
    p.add_argument("--config", required=True)
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("calibrate", help="calibrate alpha and write alpha.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("report", help="full pipeline with all reports")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc.__cause__}", file=sys.stderr)
    except RwkitError as exc:
        field = getattr(exc, "field", None)
        label = f"{type(exc).__name__}" + (f" ({field})" if field else "")
        print(f"error [{label}]: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
