"""
Command-line front end.

Exit codes: 0 when every enabled check passes, 1 when a check fails or a
point evaluation errors, 2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

from .conformal import DimensionError
from .scan import (ConfigError, OUTPUT_DIR_ENV, ScanConfig, output_path, report_csv,
                   report_json, run_scan)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _metric_arg(text: str):
    """A metric name (``sphere2``, ``euclidean3``) or a JSON object ``{"kind": ..., "params": ...}``."""
    text = text.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise argparse.ArgumentTypeError(f"bad metric JSON: {exc}") from None
    return text


def _tol_arg(text: str):
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("expected NAME=VALUE")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {name!r} is not a number") from None


def _common(p: argparse.ArgumentParser, count: int):
    p.add_argument("--count", type=int, default=count, help="number of sample points")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--y-scale", type=float, default=1.0, help="length of sampled directions")
    p.add_argument("--order", type=int, default=4, help="jet order")
    p.add_argument("--tol", type=_tol_arg, action="append", default=[], metavar="NAME=VALUE",
                   help="override a tolerance (repeatable)")
    p.add_argument("--with-oracle", action="store_true",
                   help="append finite-difference oracle columns (Riemannian metrics only)")
    p.add_argument("--workers", type=int, default=1)
    _output(p)


def _output(p: argparse.ArgumentParser):
    p.add_argument("-o", "--output", help=f"report path, '-' for stdout (default dir: ${OUTPUT_DIR_ENV})")
    p.add_argument("--format", choices=["json", "csv"], default=None)
    p.add_argument("-q", "--quiet", action="store_true", help="suppress the summary lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finslerjet",
                                     description="Curvature scans of Finsler metrics with jet arithmetic.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="run a JSON scan config")
    p.add_argument("config", help="path to a scan config")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--with-oracle", action="store_true", default=None)
    _output(p)

    p = sub.add_parser("einstein-check", help="horizontal Ricci, Scal and the Einstein residual")
    p.add_argument("--metric", type=_metric_arg, required=True)
    _common(p, 20)

    p = sub.add_parser("conformal-check", help="R-Einstein preservation residual of e^u F")
    p.add_argument("--metric", type=_metric_arg, required=True)
    p.add_argument("--u", required=True, help="factor spec, e.g. const:1.0 or linear:0.1,0,0")
    _common(p, 20)

    p = sub.add_parser("cylinder-check", help="Hess(phi) = phi'' g on (0, eps) x M2")
    p.add_argument("--phi", default="cos+c")
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--eps", type=float, default=3.14)
    p.add_argument("--m2", type=_metric_arg, default="sphere2")
    _common(p, 50)

    p = sub.add_parser("warped-check", help="warped-product block, connection and curvature identities")
    p.add_argument("--m1", type=_metric_arg, required=True)
    p.add_argument("--m2", type=_metric_arg, required=True)
    p.add_argument("--f", default="const:1", help="warping factor spec on the first factor")
    _common(p, 20)

    p = sub.add_parser("oracle-diff", help="compare a Riemannian metric against the finite-difference oracle")
    p.add_argument("--metric", type=_metric_arg, required=True)
    _common(p, 50)
    return parser


def _config_from_args(args) -> dict:
    if args.command == "einstein-check":
        metric, checks, extra = args.metric, ["einstein"], {}
    elif args.command == "conformal-check":
        metric, checks, extra = args.metric, ["conformal"], {"conformal": {"u": args.u}}
    elif args.command == "cylinder-check":
        params = {"m2": args.m2, "phi": args.phi, "eps": args.eps}
        if args.c is not None:
            params["c"] = args.c
        metric, checks, extra = {"kind": "cylinder", "params": params}, ["cylinder"], {}
    elif args.command == "warped-check":
        metric = {"kind": "warped", "params": {"m1": args.m1, "m2": args.m2, "f": args.f}}
        checks, extra = ["warped"], {}
    else:  # oracle-diff
        metric, checks, extra = args.metric, ["properties"], {}
    data = {
        "metric": metric,
        "samples": {"count": args.count, "seed": args.seed, "y_scale": args.y_scale},
        "order": args.order,
        "tolerances": dict(args.tol),
        "checks": checks,
        "with_oracle": args.with_oracle or args.command == "oracle-diff",
        "workers": args.workers,
        **extra,
    }
    return data


def _check_writable(path: str):
    if path == "-":
        return
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise ConfigError(f"output path {path} is not writable")
    if os.path.isdir(path):
        raise ConfigError(f"output path {path} is a directory")


def _summary_lines(report: dict) -> list[str]:
    lines = []
    for check, entry in sorted(report["summary"].items()):
        for name, r in sorted(entry["residuals"].items()):
            status = "PASS" if r["pass"] else "FAIL"
            mx = "nan" if r["max"] is None else f"{r['max']:.3e}"
            lines.append(f"{status} {check}.{name}: max={mx} tol={r['tolerance']:.1e}")
        for name, r in sorted(entry.get("diagnostics", {}).items()):
            mx = "nan" if r["max"] is None else f"{r['max']:.3e}"
            lines.append(f"info {check}.{name}: max={mx} (diagnostic, not checked)")
    if "scal" in report["stats"]:
        s = report["stats"]["scal"]
        if s["count"]:
            lines.append(f"scal: mean={s['mean']:.12g} min={s['min']:.12g} max={s['max']:.12g}")
    if report["failures"]:
        lines.append(f"{len(report['failures'])} point(s) failed")
    if report["excluded"]:
        lines.append(f"{report['excluded']} point(s) excluded")
    lines.append("PASSED" if report["passed"] else "FAILED")
    return lines


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    try:
        if args.command == "scan":
            config = ScanConfig.load(args.config)
            if args.workers is not None:
                config.workers = args.workers
            if args.with_oracle:
                config.with_oracle = True
        else:
            config = ScanConfig.from_dict(_config_from_args(args))
        if args.output is not None:
            config.output["path"] = args.output
        if args.format is not None:
            config.output["format"] = args.format
        path = output_path(config)
        _check_writable(path)
        with warnings.catch_warnings():
            if args.quiet:
                warnings.simplefilter("ignore", RuntimeWarning)
            report = run_scan(config)
    except (ConfigError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    text = report_csv(report) if config.output.get("format", "json") == "csv" else report_json(report)
    if path == "-":
        sys.stdout.write(text)
    else:
        try:
            with open(path, "w") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error: cannot write {path}: {exc.strerror}", file=sys.stderr)
            return EXIT_USAGE
    if not args.quiet:
        out = sys.stderr if path == "-" else sys.stdout
        for line in _summary_lines(report):
            print(line, file=out)
        if path != "-":
            print(f"report: {path}", file=out)
    return EXIT_PASS if report["passed"] else EXIT_FAIL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
