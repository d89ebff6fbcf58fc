"""Command-line entry point: ``monomed {estimate,simulate,oracle-check,report}``.

Settings come from an optional YAML config file; command-line flags override
it. Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation
or simulation failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import yaml

from .dataset import ColumnSpec, DataError, load_csv
from .estimator import NUISANCES, VARIANTS, EstimandSpec, EstimationError, EstimatorConfig, estimate
from .learners import LearnerError, LearnerSpec, default_stack, intercept_only
from .oracle import OracleError, get_dgm, oracle_report
from .sim import SimError, get_scenario, metrics_chart_svg, metrics_from_json, report, run_study

EXIT_CONFIG, EXIT_DATA, EXIT_ESTIMATION = 2, 3, 4


class ConfigError(ValueError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        cfg = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return cfg


def _merge(cfg: dict, args: argparse.Namespace, keys: Sequence[str]) -> dict:
    out = dict(cfg)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _learner(value: Any) -> LearnerSpec:
    if isinstance(value, LearnerSpec):
        return value
    if isinstance(value, str):
        named = {
            "default": default_stack(),
            "intercept_only": intercept_only(),
            "glm": LearnerSpec(kind="glm"),
            "glm_pairwise": LearnerSpec(kind="glm", interactions=True),
        }
        if value not in named:
            raise ConfigError(f"unknown learner {value!r}; use one of {sorted(named)} or a mapping")
        return named[value]
    if isinstance(value, dict):
        try:
            return LearnerSpec.from_dict(value)
        except (TypeError, LearnerError, ValueError) as exc:
            raise ConfigError(f"bad learner spec {value!r}: {exc}") from exc
    raise ConfigError(f"bad learner spec {value!r}")


def _int(cfg: dict, key: str, default: int) -> int:
    v = cfg.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key} must be an integer, got {v!r}")
    return v


def _columns(cfg: dict, data_path: Path) -> ColumnSpec:
    spec = dict(cfg.get("columns") or {})
    if "w" not in spec:
        # covariates default to every column not named as A, Z, M or Y
        if not data_path.exists():
            raise DataError(f"data file not found: {data_path}")
        with data_path.open(newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), [])
        used = {spec.get("a", "A"), spec.get("z", "Z"), spec.get("y", "Y"), *spec.get("m", ("M",))}
        spec["w"] = [c for c in header if c not in used]
    return ColumnSpec.from_dict(spec)


def estimator_config(cfg: dict) -> EstimatorConfig:
    learners = cfg.get("learners") or {}
    if not isinstance(learners, dict):
        raise ConfigError("learners must map nuisance names to learner specs")
    unknown = set(learners) - set(NUISANCES)
    if unknown:
        raise ConfigError(f"unknown nuisance(s) in learners: {sorted(unknown)}")
    a, ap = cfg.get("a", 1), cfg.get("aprime", 0)
    variant = cfg.get("variant")
    if variant is not None and variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}")
    seed = _int(cfg, "seed", 0)
    cv_folds = _int(cfg, "cv_folds", 5)
    specs = {}
    for k, v in learners.items():
        s = _learner(v)
        if s.kind == "cv_select":
            s = LearnerSpec.from_dict({**s.to_dict(), "seed": seed, "cv_folds": s.cv_folds})
        specs[k] = s
    try:
        return EstimatorConfig(
            folds=_int(cfg, "folds", 2),
            delta=float(cfg.get("truncate", 0.01)),
            seed=seed,
            specs=specs or None,
            variant=variant,
            clip_q_diff=bool(cfg.get("clip_q_diff", False)),
            randomized_a=None if cfg.get("randomized_a") is None else float(cfg["randomized_a"]),
            stratify_folds=bool(cfg.get("stratify_folds", False)),
            cv_folds=cv_folds,
            estimand=EstimandSpec(int(a), int(ap)),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def estimate_cmd(cfg: dict) -> int:
    if not cfg.get("data"):
        raise ConfigError("estimate needs a data file (--data or 'data:' in the config)")
    fmt = cfg.get("format", "json")
    config = estimator_config(cfg)
    path = Path(cfg["data"])
    d = load_csv(path, _columns(cfg, path))
    res = estimate(d, config)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["effect", "est", "se", "ci_low", "ci_high"])
        for name in ("nde", "nie", "ate"):
            c = getattr(res, name)
            w.writerow([name, repr(c.est), repr(c.se), repr(c.ci_low), repr(c.ci_high)])
        text = buf.getvalue()
    else:
        text = _dump(res.to_dict())
    _write(text, cfg.get("out"))
    print(res.summary(), file=sys.stdout if cfg.get("out") else sys.stderr)
    return 0


def simulate_cmd(cfg: dict) -> int:
    study = dict(cfg.get("study") or {})
    for k in ("reps", "n", "J", "n_jobs"):
        if k in cfg:
            study[k] = cfg[k]
    dgm = get_dgm(study.get("dgm", "reference"))
    names = study.get("scenarios", ["all_correct"])
    names = [names] if isinstance(names, str) else names
    ns = study.get("n", 10000)
    ns = [ns] if isinstance(ns, int) else ns
    reps = _int(study, "reps", 500)
    J = _int(study, "J", 2)
    n_jobs = _int(study, "n_jobs", 1)
    seed = _int(cfg, "seed", 0)
    cv_folds = _int(cfg, "cv_folds", 5)
    results = []
    for name in names:
        try:
            scen = get_scenario(name, cv_folds)
        except SimError as exc:
            raise ConfigError(str(exc)) from exc
        for n in ns:
            m = run_study(dgm, scen, reps, int(n), J, seed, n_jobs)
            results.append(m)
            print(f"{name} n={n}: done ({m.n_failed} failed)", file=sys.stderr)
    fmt = cfg.get("format", "json")
    text = report(results, "csv") if fmt == "csv" else _dump([m.to_dict() for m in results])
    _write(text, cfg.get("out"))
    return 0


def oracle_cmd(cfg: dict) -> int:
    oc = dict(cfg.get("oracle") or {})
    dgm = get_dgm(oc.get("dgm", cfg.get("dgm", "reference")))
    eps = [float(e) for e in oc.get("eps", [0.1, 0.05, 0.025])]
    rep = oracle_report(dgm, eps, cfg.get("variant"))
    if cfg.get("format") == "csv":
        buf = io.StringIO()
        cols = ["a", "a_prime", "z", "z_prime", "eps", "lhs", "rhs", "abs_diff", "ratio"]
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        for row in rep["remainder"]:
            w.writerow({k: "" if row[k] is None else row[k] for k in cols})
        text = buf.getvalue()
    else:
        text = _dump(rep)
    _write(text, cfg.get("out"))
    t = rep["truth"]
    b = rep["efficiency_bound"]
    print(f"{dgm.name}: NDE {t['nde']:.4f} (bound {b['nde']:.4f}), NIE {t['nie']:.4f} (bound {b['nie']:.4f}); "
          f"shipped-variant candidates: {rep['variant_adjudication']['passing']}", file=sys.stderr)
    return 0


def report_cmd(cfg: dict) -> int:
    rc = dict(cfg.get("report") or {})
    src = cfg.get("metrics") or rc.get("metrics")
    if not src:
        raise ConfigError("report needs a metrics file (--metrics or 'report: {metrics: ...}')")
    p = Path(src)
    if not p.exists():
        raise DataError(f"metrics file not found: {p}")
    try:
        metrics = metrics_from_json(p.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read metrics from {p}: {exc}") from exc
    fmt = cfg.get("format", "text")
    _write(report(metrics, "csv" if fmt == "csv" else "text"), cfg.get("out"))
    chart = cfg.get("chart") or rc.get("chart")
    if chart:
        Path(chart).write_text(metrics_chart_svg(metrics, rc.get("metric", "coverage95")), encoding="utf-8")
    return 0


COMMANDS = {"estimate": estimate_cmd, "simulate": simulate_cmd, "oracle-check": oracle_cmd, "report": report_cmd}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="monomed", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--seed", type=int)
    common.add_argument("--format", choices=["json", "csv", "text"])

    e = sub.add_parser("estimate", parents=[common], help="estimate NDE/NIE/ATE from a CSV file")
    e.add_argument("--data", help="input CSV")
    e.add_argument("--a", type=int, choices=[0, 1])
    e.add_argument("--aprime", type=int, choices=[0, 1])
    e.add_argument("--folds", type=int, help="number of cross-fitting folds J")
    e.add_argument("--truncate", type=float, help="truncation level delta for probabilities")
    e.add_argument("--randomized-a", dest="randomized_a", type=float, help="known P(A=1) in a randomised design")

    s = sub.add_parser("simulate", parents=[common], help="run the Monte Carlo study")
    s.add_argument("--reps", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--n-jobs", dest="n_jobs", type=int)

    sub.add_parser("oracle-check", parents=[common], help="exact truths, bounds and influence-function checks")

    r = sub.add_parser("report", parents=[common], help="render stored simulation metrics")
    r.add_argument("--metrics", help="metrics JSON written by simulate")
    r.add_argument("--chart", help="write an SVG metrics-vs-n chart here")
    return p


_FLAGS = ("out", "seed", "format", "data", "a", "aprime", "folds", "truncate", "randomized_a",
          "reps", "n", "n_jobs", "metrics", "chart")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _merge(_load_config(args.config), args, _FLAGS)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EstimationError, SimError, OracleError, LearnerError) as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
