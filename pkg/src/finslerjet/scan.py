"""
Point scans: config parsing, metric registry, per-point checks and reports.

A scan config is a JSON document (see ``schemas/scanconfig.schema.json``);
the resulting report follows ``schemas/scanreport.schema.json``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import platform
import re
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from . import __version__, jets
from .conformal import (DEGENERATE_WARP, ScalarFactor, eq122b_gap, ee9_terms,
                        hessian_form_residual, horizontal_hessian, make_cylinder)
from .core import FinslerMetric, Pipeline, PointState, max_abs, property_residuals
from .oracle import conformal_efree_prediction, riemann_ricci_fd
from .zoo import (WarpedProductMetric, hyperbolic2_field, make_conformal,
                  make_euclidean, make_randers, make_riemannian, make_s5_example, make_sphere2,
                  make_warped, sphere3_field, warped_residuals)

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
OUTPUT_DIR_ENV = "FINSLERJET_OUTPUT_DIR"
CHECKS = ("properties", "einstein", "conformal", "cylinder", "warped")

DEFAULT_TOLERANCES = {
    # properties
    "homogeneity_F": 1e-9,
    "homogeneity_g": 1e-8,
    "euler": 1e-8,
    "g_inverse": 1e-10,
    "cartan_symmetry": 1e-9,
    "cartan_y": 1e-9,
    "cartan_norm": 1e-10,
    "connection_symmetry": 0.0,
    "compatibility": 1e-7,
    "n_gamma": 1e-8,
    "delta_F2": 1e-8,
    "hh_antisymmetry": 1e-14,
    "efree_trace": 1e-10,
    # einstein
    "einstein_residual": 1e-8,
    "scal_spread": 1e-6,
    # conformal
    "ee9_residual": 1e-8,
    # cylinder
    "hessian_residual": 1e-6,
    "hessian_form_residual": 1e-6,
    # warped
    "block_offdiag": 1e-12,
    "mixed_connection": 1e-7,
    "curvature_mixed_zero": 1e-8,
    "first_factor_connection": 1e-7,
    "first_factor_curvature": 1e-6,
    # oracle
    "oracle_christoffel": 1e-6,
    "oracle_riemann": 1e-5,
    "oracle_ricci": 1e-5,
    "oracle_scal": 1e-5,
}


class ConfigError(ValueError):
    """Malformed scan configuration or unusable parameters."""


def _schema(name: str) -> dict:
    return json.loads(resources.files("finslerjet").joinpath("schemas", name).read_text())


CONFIG_SCHEMA = _schema("scanconfig.schema.json")
REPORT_SCHEMA = _schema("scanreport.schema.json")


# -- factor and metric specs ------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def parse_factor(spec: str) -> ScalarFactor:
    """Scalar function of the base coordinates from a short text spec.

    ``const:C``, ``linear:a1,a2,...``, ``cos+c:C`` (cos x1 + C), ``sin`` or
    ``sin:A`` (A sin x1), ``neglog-cos+c:C`` (-log(cos x1 + C)).
    """
    head, _, arg = spec.partition(":")
    head = head.strip()
    if head == "const":
        (c,) = _floats(arg) or [0.0]
        return ScalarFactor.constant(c)
    if head == "linear":
        return ScalarFactor.linear(_floats(arg))
    if head == "cos+c":
        (c,) = _floats(arg)
        return ScalarFactor.of_coordinate(lambda t: jets.cos(t) + c, 0, spec)
    if head == "sin":
        (a,) = _floats(arg) or [1.0]
        return ScalarFactor.of_coordinate(lambda t: a * jets.sin(t), 0, spec)
    if head == "neglog-cos+c":
        (c,) = _floats(arg)
        if not c > 1:
            raise ConfigError("neglog-cos+c needs C > 1")
        return ScalarFactor.of_coordinate(lambda t: -jets.log(jets.cos(t) + c), 0, spec)
    raise ConfigError(f"unknown factor spec {spec!r}")


def parse_profile(spec: str, c: float | None = None):
    """Univariate phi(t) for cylinder scans: ``cos+c`` (needs c) or ``linear:a,b``."""
    head, _, arg = spec.partition(":")
    if head == "cos+c":
        if arg:
            (c,) = _floats(arg)
        if c is None:
            raise ConfigError("phi 'cos+c' needs the constant c")
        c = float(c)
        return lambda t: jets.cos(t) + c
    if head == "linear":
        vals = _floats(arg) or [1.0, 0.0]
        a, b = (vals + [0.0])[:2]
        return lambda t: a * t + b
    raise ConfigError(f"unknown phi spec {spec!r}")


_SHORTHAND = re.compile(r"^(euclidean)(\d+)$")


def normalize_metric_spec(spec) -> tuple[str, dict]:
    if isinstance(spec, str):
        kind, params = spec, {}
    else:
        kind, params = spec["kind"], dict(spec.get("params", {}))
    m = _SHORTHAND.match(kind)
    if m:
        kind, params = m.group(1), {"n": int(m.group(2)), **params}
    return kind, params


def _expect(params: dict, kind: str, allowed: set):
    extra = set(params) - allowed
    if extra:
        raise ConfigError(f"unknown parameter(s) for metric '{kind}': {sorted(extra)}")


def build_metric(spec) -> FinslerMetric:
    kind, params = normalize_metric_spec(spec)
    try:
        return _build(kind, params)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _build(kind: str, params: dict) -> FinslerMetric:
    if kind == "euclidean":
        _expect(params, kind, {"n"})
        return make_euclidean(int(params.get("n", 2)))
    if kind == "sphere2":
        _expect(params, kind, set())
        return make_sphere2()
    if kind == "sphere3":
        _expect(params, kind, set())
        return make_riemannian(sphere3_field())
    if kind == "hyperbolic2":
        _expect(params, kind, set())
        return make_riemannian(hyperbolic2_field())
    if kind == "randers":
        _expect(params, kind, {"b"})
        return make_randers(params.get("b", [0.5, 0.0]))
    if kind == "s5_example":
        _expect(params, kind, {"c"})
        metric, _ = make_s5_example(float(params.get("c", 2.0)))
        return metric
    if kind == "warped":
        _expect(params, kind, {"m1", "m2", "f"})
        m1 = build_metric(params["m1"])
        m2 = build_metric(params["m2"])
        spec = params.get("f", "const:1")
        metric = make_warped(m1, m2, parse_factor(spec), params=params)
        metric.constant_warp = spec.startswith("const")
        return metric
    if kind == "conformal":
        _expect(params, kind, {"base", "u"})
        base = build_metric(params["base"])
        pair = make_conformal(base, parse_factor(params["u"]))
        pair.deformed.pair = pair
        return pair.deformed
    if kind == "cylinder":
        _expect(params, kind, {"m2", "phi", "c", "eps"})
        m2 = build_metric(params.get("m2", "sphere2"))
        phi = parse_profile(params.get("phi", "cos+c"), params.get("c"))
        cyl = make_cylinder(m2, phi, float(params.get("eps", math.pi)))
        cyl.phi = phi
        return cyl
    raise ConfigError(f"unknown metric kind {kind!r}")


# -- config ---------------------------------------------------------------------------

@dataclass
class ScanConfig:
    metric: dict
    count: int = 10
    seed: int = 0
    y_scale: float = 1.0
    domain: list | None = None
    order: int = 4
    tolerances: dict = field(default_factory=dict)
    checks: list = field(default_factory=lambda: ["properties"])
    conformal: dict | None = None
    output: dict = field(default_factory=lambda: {"format": "json"})
    with_oracle: bool = False
    workers: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "ScanConfig":
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid config at {where}: {exc.message}") from None
        samples = data.get("samples", {})
        kind, params = normalize_metric_spec(data["metric"])
        unknown_tol = set(data.get("tolerances", {})) - set(DEFAULT_TOLERANCES)
        if unknown_tol:
            raise ConfigError(f"unknown tolerance name(s): {sorted(unknown_tol)}")
        return cls(
            metric={"kind": kind, "params": params},
            count=samples.get("count", 10),
            seed=samples.get("seed", 0),
            y_scale=samples.get("y_scale", 1.0),
            domain=samples.get("domain"),
            order=data.get("order", 4),
            tolerances=dict(data.get("tolerances", {})),
            checks=list(data.get("checks", ["properties"])),
            conformal=data.get("conformal"),
            output=dict(data.get("output", {"format": "json"})),
            with_oracle=data.get("with_oracle", False),
            workers=data.get("workers", 1),
        )

    @classmethod
    def load(cls, path: str) -> "ScanConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        samples = {"count": self.count, "seed": self.seed, "y_scale": self.y_scale}
        if self.domain is not None:
            samples["domain"] = self.domain
        out = {"metric": self.metric, "samples": samples, "order": self.order,
               "tolerances": self.tolerances, "checks": self.checks,
               "output": self.output, "with_oracle": self.with_oracle, "workers": self.workers}
        if self.conformal is not None:
            out["conformal"] = self.conformal
        return out

    def tolerance(self, name: str) -> float:
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))


# -- per-point evaluation ---------------------------------------------------------------

@dataclass
class _Context:
    config: ScanConfig
    metric: FinslerMetric
    factor: ScalarFactor | None = None
    pair: object = None


def _prepare(config: ScanConfig) -> _Context:
    metric = build_metric(config.metric)
    if config.domain is not None:
        if len(config.domain) != metric.dim:
            raise ConfigError(f"domain override needs {metric.dim} intervals")
        metric.x_box = [tuple(map(float, b)) for b in config.domain]
        metric._sampler = None
    if config.order < 4 and ({"einstein", "conformal", "cylinder", "warped"} & set(config.checks)
                             or config.with_oracle):
        raise ConfigError("curvature checks need order >= 4")
    ctx = _Context(config, metric)
    if "conformal" in config.checks:
        spec = (config.conformal or {}).get("u")
        if spec is None:
            raise ConfigError("the conformal check needs conformal.u")
        if metric.dim < 3:
            raise ConfigError(f"the conformal check needs dimension >= 3, metric has {metric.dim}")
        ctx.factor = parse_factor(spec)
        ctx.pair = make_conformal(metric, ctx.factor)
    if "cylinder" in config.checks and not hasattr(metric, "phi"):
        raise ConfigError("the cylinder check needs metric kind 'cylinder'")
    if "warped" in config.checks and not isinstance(metric, WarpedProductMetric):
        raise ConfigError("the warped check needs a warped-product metric")
    if config.with_oracle and not hasattr(metric, "field"):
        raise ConfigError(f"metric '{metric.label}' has no Riemannian field for the oracle")
    return ctx


def _is_riemannian(metric) -> bool:
    """True when F^2 is known to be quadratic in y (A vanishes identically)."""
    if isinstance(metric, WarpedProductMetric):
        return _is_riemannian(metric.m1) and _is_riemannian(metric.m2)
    return hasattr(metric, "field")


def _evaluate(ctx: _Context, index: int, p: PointState) -> dict:
    metric, cfg = ctx.metric, ctx.config
    pipe = Pipeline(metric, p)
    checked: dict[str, dict] = {}
    diag: dict[str, dict] = {}
    rec = {"index": index, "x": list(p.x), "y": list(p.y), "F": pipe.F_val}

    if "properties" in cfg.checks:
        res = property_residuals(pipe)
        if _is_riemannian(metric):
            res["cartan_norm"] = max_abs(pipe.cartan)
        checked["properties"] = res
    if {"einstein", "conformal", "cylinder", "warped"} & set(cfg.checks) or cfg.with_oracle:
        rec["scal"] = pipe.scal
        rec["einstein_residual"] = pipe.einstein_residual
    if "einstein" in cfg.checks:
        checked["einstein"] = {"einstein_residual": pipe.einstein_residual}
    if "conformal" in cfg.checks:
        terms = ee9_terms(metric, ctx.factor, p, pipe)
        checked["conformal"] = {"ee9_residual": max_abs(terms.ee9_residual)}
        d = {"cartan_term": abs(terms.cartan_term),
             "hessian_symmetry": max_abs(terms.hess_u - terms.hess_u.T),
             "bmap_norm": max_abs(terms.bmap),
             "eq122b_gap": max_abs(eq122b_gap(ctx.pair, p))}
        if cfg.with_oracle:
            pred = conformal_efree_prediction(metric.field, p.x, ctx.factor)
            deformed = Pipeline(ctx.pair.deformed, p)
            d["classical_conformal_gap"] = max_abs(deformed.efree - pred["prediction"])
        diag["conformal"] = d
    if "cylinder" in cfg.checks:
        phi = metric.phi
        u_phi = ScalarFactor.of_coordinate(phi, 0)
        ddphi = jets.derivative(jets.derivative(phi))(p.x[0])
        hess = horizontal_hessian(metric, u_phi, p, pipe)
        res = {"hessian_residual": max_abs(hess - ddphi * pipe.g)}
        if metric.dim >= 3:
            res["hessian_form_residual"] = max_abs(hessian_form_residual(metric, u_phi, p, pipe))
        checked["cylinder"] = res
        d = {"einstein_cylinder": pipe.einstein_residual}
        if float(phi(p.x[0])) > 0:
            partner = make_conformal(metric, ScalarFactor.of_coordinate(lambda t: jets.log(phi(t)), 0))
            d["einstein_partner"] = Pipeline(partner.deformed, p).einstein_residual
        diag["cylinder"] = d
    if "warped" in cfg.checks:
        res = warped_residuals(metric, p, pipe)
        if _is_riemannian(metric.m1) or getattr(metric, "constant_warp", False):
            checked["warped"] = res
        else:
            firsts = {k: res.pop(k) for k in list(res) if k.startswith("first_factor")}
            firsts["curvature_mixed_zero"] = res.pop("curvature_mixed_zero")
            checked["warped"] = res
            diag["warped"] = firsts
    if cfg.with_oracle:
        o = riemann_ricci_fd(metric.field, p.x)
        checked["oracle"] = {
            "oracle_christoffel": max_abs(pipe.chern - o.christoffel),
            "oracle_riemann": max_abs(np.einsum("jmkl->mjkl", pipe.hh_lowered) - o.riemann_lowered),
            "oracle_ricci": max_abs(pipe.ricci - o.ricci),
            "oracle_scal": abs(pipe.scal - o.scal),
        }
    rec["residuals"] = checked
    rec["diagnostics"] = diag
    return rec


_WORKER_CTX: _Context | None = None


def _worker_init(config_dict):
    global _WORKER_CTX
    _WORKER_CTX = _prepare(ScanConfig.from_dict(config_dict))


def _worker_eval(item):
    index, p = item
    return _safe_evaluate(_WORKER_CTX, index, p)


def _safe_evaluate(ctx, index, p):
    try:
        return _evaluate(ctx, index, p)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return {"index": index, "x": list(p.x), "y": list(p.y),
                "error": f"{type(exc).__name__}: {exc}"}


def _sample(ctx: _Context) -> tuple[list, int]:
    cfg, metric = ctx.config, ctx.metric
    points = metric.sample_points(cfg.count, cfg.seed, cfg.order, cfg.y_scale)
    excluded = 0
    if hasattr(metric, "phi"):
        dphi = jets.derivative(metric.phi)
        kept = []
        for p in points:
            if abs(dphi(p.x[0])) < DEGENERATE_WARP:
                warnings.warn(f"phi'(t) vanishes at t={p.x[0]:g}; point excluded", RuntimeWarning)
                excluded += 1
            else:
                kept.append(p)
        points = kept
    return points, excluded


# -- report -------------------------------------------------------------------------------

def _clean(v):
    if isinstance(v, float):
        return v if math.isfinite(v) else None
    if isinstance(v, dict):
        return {k: _clean(w) for k, w in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(w) for w in v]
    if isinstance(v, np.generic):
        return _clean(v.item())
    return v


def _stats(values):
    vals = [v for v in values if v is not None and math.isfinite(v)]
    if not vals:
        return {"max": None, "mean": None, "min": None, "count": 0}
    return {"max": max(vals), "mean": sum(vals) / len(vals), "min": min(vals), "count": len(vals)}


def _summarize(cfg: ScanConfig, records: list, failures: list, dim: int) -> dict:
    groups = list(cfg.checks) + (["oracle"] if cfg.with_oracle else [])
    summary = {}
    for check in groups:
        names = sorted({k for r in records for k in r["residuals"].get(check, {})})
        residuals = {}
        for name in names:
            st = _stats([r["residuals"][check].get(name) for r in records])
            tol = cfg.tolerance(name)
            residuals[name] = {"max": st["max"], "mean": st["mean"], "tolerance": tol,
                               "pass": st["max"] is not None and st["max"] <= tol}
        if check == "einstein" and records:
            scal = _stats([r.get("scal") for r in records])
            spread = scal["max"] - scal["min"]
            tol = cfg.tolerance("scal_spread")
            entry = {"max": spread, "mean": spread, "tolerance": tol, "pass": spread <= tol}
            if dim >= 3:
                residuals["scal_spread"] = entry
        diag_names = sorted({k for r in records for k in r.get("diagnostics", {}).get(check, {})})
        diagnostics = {}
        for name in diag_names:
            st = _stats([r["diagnostics"][check].get(name) for r in records])
            diagnostics[name] = {"max": st["max"], "mean": st["mean"]}
        entry = {"residuals": residuals,
                 "pass": bool(records) and all(v["pass"] for v in residuals.values())
                 and not failures}
        if not records and not failures:
            entry["pass"] = True  # vacuous scan
        if diagnostics:
            entry["diagnostics"] = diagnostics
        summary[check] = entry
    return summary


def run_scan(config: ScanConfig) -> dict:
    """Evaluate every enabled check over the sample plan and build the report."""
    started = time.perf_counter()
    ctx = _prepare(config)
    points, excluded = _sample(ctx)
    items = list(enumerate(points))
    if config.workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(config.workers, initializer=_worker_init,
                                 initargs=(config.to_dict(),)) as pool:
            results = list(pool.map(_worker_eval, items, chunksize=max(1, len(items) // (4 * config.workers))))
    else:
        results = [_safe_evaluate(ctx, i, p) for i, p in items]
    results.sort(key=lambda r: r["index"])
    records = [r for r in results if "error" not in r]
    failures = [r for r in results if "error" in r]
    for f in failures:
        log.warning("point %d failed: %s", f["index"], f["error"])

    summary = _summarize(config, records, failures, ctx.metric.dim)
    stats = {}
    if records and "scal" in records[0]:
        stats["scal"] = _stats([r["scal"] for r in records])
        stats["einstein_residual"] = _stats([r["einstein_residual"] for r in records])
    report = {
        "schema_version": SCHEMA_VERSION,
        "versions": {"finslerjet": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "config": config.to_dict(),
        "metric": {"label": ctx.metric.label, "dim": ctx.metric.dim},
        "seed": config.seed,
        "per_point": records,
        "failures": failures,
        "excluded": excluded,
        "summary": summary,
        "stats": stats,
        "passed": all(s["pass"] for s in summary.values()) and not failures,
        "timing": {"seconds": time.perf_counter() - started},
    }
    return _clean(report)


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def csv_columns(report: dict) -> list[str]:
    dim = report["metric"]["dim"]
    cols = ["index"] + [f"x{i}" for i in range(dim)] + [f"y{i}" for i in range(dim)]
    cols += ["F", "scal", "einstein_residual"]
    names = set()
    for r in report["per_point"]:
        for group in ("residuals", "diagnostics"):
            for check, vals in r.get(group, {}).items():
                names.update(f"{check}.{k}" for k in vals)
    return cols + sorted(names)


def report_csv(report: dict) -> str:
    cols = csv_columns(report)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for r in report["per_point"]:
        row = {"index": r["index"], "F": r["F"], "scal": r.get("scal"),
               "einstein_residual": r.get("einstein_residual")}
        for i, v in enumerate(r["x"]):
            row[f"x{i}"] = v
        for i, v in enumerate(r["y"]):
            row[f"y{i}"] = v
        for group in ("residuals", "diagnostics"):
            for check, vals in r.get(group, {}).items():
                for k, v in vals.items():
                    row[f"{check}.{k}"] = v
        writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                         for k, v in row.items()})
    return buf.getvalue()


def output_path(config: ScanConfig) -> str:
    fmt = config.output.get("format", "json")
    path = config.output.get("path")
    if path == "-":
        return path
    base = os.environ.get(OUTPUT_DIR_ENV)
    if path is None:
        path = f"{config.metric['kind']}-report.{fmt}"
        return os.path.join(base, path) if base else path
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path
