"""Command line: verify, sweep, tradeoff and analyze.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .bounds import BoundError, BoundInputs, perf_bound, perf_constants, symmetry_constant, tradeoff_lambda_star

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
SUITES = ("generr", "cover", "iso", "kt", "density")

TRADEOFF_DEFAULTS = {
    "C": 0.04, "C1": 0.04, "C2": 0.04, "C3": 0.01, "n": 1_000_000,
    "d_G": 1.0, "d0": 3.0, "eps": 0.0,
}
TRADEOFF_PROVENANCE = {
    "C, C1, C2, C3, n": "reference tradeoff constants",
    "d_G, d0, eps": "package defaults, override in the config",
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# helpers


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists() or p.is_dir():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _number(token: str) -> float:
    try:
        return float(Fraction(token))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad number {token!r} in grid") from exc


def parse_grid(text: str) -> list:
    """'a,b,c' (numbers, fractions or subset names), 'lin:a:b:k' or 'log:a:b:k'."""
    text = text.strip()
    if not text:
        raise ConfigError("grid is empty")
    kind, _, rest = text.partition(":")
    if kind in ("lin", "log") and rest:
        parts = rest.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid {text!r} needs start:stop:count")
        a, b = _number(parts[0]), _number(parts[1])
        try:
            k = int(parts[2])
        except ValueError as exc:
            raise ConfigError(f"grid count {parts[2]!r} is not an integer") from exc
        if k < 1:
            raise ConfigError("grid count must be positive")
        if kind == "log":
            if a <= 0 or b <= 0:
                raise ConfigError("log grid needs positive endpoints")
            return list(np.geomspace(a, b, k))
        return list(np.linspace(a, b, k))
    out: list = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            raise ConfigError(f"empty entry in grid {text!r}")
        try:
            out.append(float(Fraction(tok)))
        except (ValueError, ZeroDivisionError):
            out.append(tok)
    return out


def _check_delta(delta: float) -> float:
    if not 0 < delta < 0.5:
        raise ConfigError(f"delta must lie in (0, 1/2), got {delta}")
    return delta


def _resolve(args, cfg: dict, key: str, default):
    value = getattr(args, key, None)
    return cfg.get(key, default) if value is None else value


def _emit_json(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    return repr(obj)


def _finite(x: float):
    return x if isinstance(x, (int, float)) and math.isfinite(x) else repr(x)


# ---------------------------------------------------------------------------
# verify


def _run_suite(name: str, cfg: dict, seed: int):
    from .empirics import verify as v

    opts = dict(cfg.get(name, {}))
    if name == "generr":
        return v.generr_suite(int(opts.get("instances", 100)), int(opts.get("seed", seed)),
                              tuple(opts.get("eps", (0.0, 0.1, 0.5))), opts.get("subset"))
    if name == "cover":
        return v.cover_suite(int(opts.get("m", 6)))
    if name == "iso":
        return v.iso_suite(int(opts.get("n", 8)))
    if name == "kt":
        # bundled instance: three points, eps = 1/2
        return v.kt_suite(tuple(opts.get("paths", (3,))), tuple(opts.get("eps", (0.5,))), float(opts.get("M", 2.0)))
    if name == "density":
        rotation = None
        if opts.get("rotation", True):
            from .empirics.scenarios import scenario_rotation

            rotation = scenario_rotation()
        return v.density_suite(int(opts.get("actions", 50)), int(opts.get("seed", seed)), rotation=rotation)
    raise ConfigError(f"unknown suite {name!r}")


def cmd_verify(args, cfg: dict) -> int:
    seed = int(_resolve(args, cfg, "seed", 0))
    names = SUITES if args.suite == "all" else (args.suite,)
    reports = []
    for name in names:
        rep = _run_suite(name, cfg, seed)
        reports.append(rep)
        for c in rep.checks:
            status = "PASS" if c.passed else ("INFO" if c.info else "FAIL")
            print(f"[{status}] {rep.suite}.{c.name}", file=sys.stderr)
    passed = all(r.passed for r in reports)
    doc = {
        "version": __version__,
        "command": "verify",
        "suite": args.suite,
        "config": {"seed": seed, **cfg},
        "passed": passed,
        "suites": [r.to_json() for r in reports],
    }
    _emit_json(doc, args.out)
    return EXIT_OK if passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args, cfg: dict) -> int:
    from .empirics.scenarios import scenario_from_json
    from .empirics.sweep import run_sweep, summarize, write_csv

    scen_doc = cfg.get("scenario", {"preset": "rotation"})
    if not isinstance(scen_doc, dict):
        raise ConfigError('"scenario" must be an object')
    scenario = scenario_from_json(scen_doc)
    lams = parse_grid(args.grid) if args.grid else cfg.get("lambdas")
    if lams is not None and len(lams) == 0:
        raise ConfigError("lambda grid is empty")
    eps = cfg.get("epsilons")
    n = cfg.get("n", 50)
    trials = int(cfg.get("trials", 100))
    if trials < 0:
        raise ConfigError("trials must be nonnegative")
    delta = _check_delta(float(_resolve(args, cfg, "delta", 0.1)))
    seed = int(_resolve(args, cfg, "seed", 0))
    cf = float(_resolve(args, cfg, "constant_factor", 1.0))
    if cf <= 0:
        raise ConfigError("constant factor must be positive")
    overrides = cfg.get("overrides")
    rows = run_sweep(scenario, lams, eps, n, trials, delta, seed, cf, overrides)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, fh)
    else:
        write_csv(rows, sys.stdout)
    summary = summarize(rows)
    resolved = {"scenario": scen_doc, "lambdas": lams, "epsilons": eps, "n": n, "trials": trials,
                "delta": delta, "seed": seed, "constant_factor": cf, "overrides": overrides}
    print(f"rows={summary['rows']} errors={summary['errors']} violation_rate={summary.get('violation_rate')} "
          f"argmin_lambda={summary.get('argmin_lambda')}", file=sys.stderr)
    if args.out:
        _emit_json({"version": __version__, "command": "sweep", "config": resolved, "summary": summary},
                   args.out + ".json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# tradeoff


def tradeoff_inputs(cfg: dict, args) -> tuple[BoundInputs, dict]:
    doc = dict(TRADEOFF_DEFAULTS)
    doc.update({k: v for k, v in cfg.items() if k not in ("grid", "lambdas")})
    if "d" in doc:
        doc.pop("d0", None)
    else:
        doc["d"] = float(doc.pop("d0")) + float(doc["d_G"])
    cf = _resolve(args, {}, "constant_factor", None)
    if cf is not None:
        doc["constant_factor"] = cf
    delta = _resolve(args, {}, "delta", None)
    if delta is not None:
        doc["delta"] = _check_delta(float(delta))
    doc.setdefault("lam", 1.0)
    return BoundInputs.from_dict(doc), doc


def tradeoff_curve(inp: BoundInputs, lams) -> dict:
    """Performance bound over the grid, with closed-form and grid minimizers."""
    vals, regimes = [], []
    for lam in lams:
        rep = perf_bound(inp.replace(lam=float(lam)))
        vals.append(rep.total)
        regimes.append(rep.regime)
    vals = np.array(vals)
    i = int(vals.argmin())
    stars = tradeoff_lambda_star(inp)
    regime = regimes[i]
    closed = stars.get(regime)
    interior = 0 < i < len(vals) - 1
    diffs = np.diff(vals)
    unimodal = bool((diffs[:i] < 0).all() and (diffs[i:] > 0).all())
    return {
        "lambdas": [float(x) for x in lams], "bound": vals.tolist(), "regimes": regimes,
        "argmin_index": i, "argmin_lambda": float(lams[i]), "argmin_regime": regime,
        "lambda_star_closed": stars, "lambda_star_matching": closed,
        "relative_gap": None if closed is None else abs(float(lams[i]) - closed) / closed,
        "interior_minimum": bool(interior), "decreasing_then_increasing": unimodal,
    }


def cmd_tradeoff(args, cfg: dict) -> int:
    if args.grid:
        lams = parse_grid(args.grid)
    elif "lambdas" in cfg:
        lams = cfg["lambdas"]
    elif "grid" in cfg:
        lams = parse_grid(cfg["grid"])
    else:
        lams = list(np.linspace(1e-3, 1.0, 1000))
    if not lams or any(isinstance(x, str) for x in lams):
        raise ConfigError("tradeoff grid must be a nonempty list of numbers")
    if min(lams) <= 0 or max(lams) > 1:
        raise ConfigError("tradeoff grid must lie in (0, 1]")
    inp, resolved = tradeoff_inputs(cfg, args)
    pc = perf_constants(inp)
    curve = tradeoff_curve(inp, lams)
    header = (f"# tradeoff: C={symmetry_constant(inp)} C1={pc.C1} C2={pc.C2} C3={pc.C3} n={inp.n} "
              f"d_G={inp.d_G} d0={inp.d0} eps={inp.eps}")
    print(header, file=sys.stderr)
    for key, why in TRADEOFF_PROVENANCE.items():
        print(f"#   {key}: {why}", file=sys.stderr)
    print(f"# argmin lambda={curve['argmin_lambda']:.6g} ({curve['argmin_regime']}), "
          f"closed form={curve['lambda_star_matching']}", file=sys.stderr)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(("lambda", "bound"))
        for lam, b in zip(curve["lambdas"], curve["bound"]):
            writer.writerow((repr(float(lam)), repr(float(b))))
    finally:
        if args.out:
            out.close()
    report = {"version": __version__, "command": "tradeoff", "config": resolved,
              "provenance": TRADEOFF_PROVENANCE,
              **{k: v for k, v in curve.items() if k not in ("lambdas", "bound", "regimes")}}
    if args.out:
        _emit_json(report, args.out + ".json")
    else:
        print(json.dumps(report, sort_keys=True, default=_jsonable), file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze


def cmd_analyze(args, cfg: dict) -> int:
    from .metric_core import cover_growth_check, doubling_constant, min_separation, space_from_json
    from .symmetry import (
        TransformationSubset,
        action_deformation_constants,
        action_from_json,
        group_preset,
        orbit_representatives,
    )

    out: dict[str, Any] = {"version": __version__, "command": "analyze", "config": cfg}
    if not cfg:
        raise ConfigError("analyze needs a config with a space, a group or an action")
    radii = parse_grid(args.grid) if args.grid else cfg.get("radii")
    if "space" in cfg:
        space = space_from_json(cfg["space"])
        count, center, R = doubling_constant(space, cap=cfg.get("cap"))
        out["space"] = {"size": len(space), "diameter": space.diameter, "min_separation": min_separation(space),
                        "doubling_constant": count, "ddim": math.log2(count), "doubling_witness": [center, R]}
        if radii:
            out["space"]["covering_table"] = cover_growth_check(space, radii, cfg.get("cap", 64),
                                                                math.log2(count))
    if "group" in cfg:
        group = group_preset(cfg["group"]) if isinstance(cfg["group"], str) else action_from_json(cfg["group"]).group
        out["group"] = {"name": group.name, "order": group.order, "ddim": group.ddim,
                        "delta_G": group.min_separation,
                        "right_invariant": group.metric.right_invariant}
    if "action" in cfg:
        action = action_from_json(cfg["action"])
        group = action.group
        members = cfg.get("subset")
        if members is None:
            subset = TransformationSubset.whole(group)
        else:
            subset = TransformationSubset(group, tuple(group.index(tuple(m) if isinstance(m, list) else m)
                                                       for m in members))
        reps = orbit_representatives(action, subset)
        dc = action_deformation_constants(action, subset, reps)
        out["action"] = {"points": len(action.space), "subset_size": len(subset),
                         "representatives": [action.space.labels[r] for r in reps.points],
                         "L": _finite(dc.L), "L_prime": _finite(dc.L_prime),
                         "conditions": {"cond1_lower": _finite(dc.cond1_lower), "cond2_lower": _finite(dc.cond2_lower),
                                        "cond1_upper": _finite(dc.cond1_upper), "cond2_upper": _finite(dc.cond2_upper)},
                         "witnesses": dc.witnesses}
    _emit_json(out, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config or inputs document")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--grid", help="'a,b,c', 'lin:a:b:k' or 'log:a:b:k'")
    common.add_argument("--delta", type=float, default=None)
    common.add_argument("--constant-factor", dest="constant_factor", type=float, default=None)
    parser = argparse.ArgumentParser(prog="equibound", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    pv = sub.add_parser("verify", parents=[common], help="run a verification suite")
    pv.add_argument("suite", choices=SUITES + ("all",))
    sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep to CSV")
    sub.add_parser("tradeoff", parents=[common], help="performance bound over a density grid")
    sub.add_parser("analyze", parents=[common], help="metric and group diagnostics")
    return parser


COMMANDS = {"verify": cmd_verify, "sweep": cmd_sweep, "tradeoff": cmd_tradeoff, "analyze": cmd_analyze}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = _load_config(args.config)
        if args.delta is not None:
            _check_delta(args.delta)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, BoundError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
