"""Command-line front end.

    rwreht <subcommand> --config CONFIG [--seed S] [--out DIR] [--parallelism P] [--tol T]

Subcommands: lyapunov, rate, fpp, scaling, ldp-curve, validate. Each run
writes CSV results, an SVG plot derived from the CSV, and ``manifest.json``
into the output directory. Exit status is 0 for clean runs, 1 when any
result row is flagged, 2 for configuration errors.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .fpp import estimate_time_constant, lyapunov_fpp_scaling
from .io import RunManifest, plot_csv, write_csv
from .lyapunov import estimate_alpha
from .montecarlo import empirical_ldp_curve
from .rate import NonConcaveError, OracleAlpha, SolverAlpha, rate_curve
from .scenery import EnvironmentSpec, SpecError

__all__ = ["main", "ConfigError", "parse_range", "load_config", "replay_manifest", "COLUMNS"]

COLUMNS = {
    "lyapunov": ["lam", "n", "replica", "a_over_n", "ok"],
    "lyapunov_summary": ["lam", "alpha", "se", "argmin_n", "c1", "c2", "within_sandwich", "flagged"],
    "rate": ["speed", "I", "lam_star", "attained", "I_low", "I_high", "quadratic", "upper_bound"],
    "fpp": ["n", "replica", "T_over_n", "boundary_touch"],
    "fpp_summary": ["n", "mean", "spread", "straight_mean", "flagged"],
    "scaling": ["lam", "alpha", "L", "ratio", "nu", "flagged"],
    "ldp": ["speed", "empirical_rate", "I", "I_attained", "samples", "hits", "flag"],
}

# section -> field -> (kind, default)
SCHEMA = {
    "lyapunov": {
        "direction": ("ints", None),
        "lams": ("floats", [1.0]),
        "schedule": ("ints", [10, 20, 40, 80, 160]),
        "replicas": ("int", 16),
    },
    "rate": {
        "direction": ("ints", None),
        "speeds": ("floats", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]),
        "lam_max": ("float", 1e3),
        "n": ("int", 1000),
        "replicas": ("int", 1),
    },
    "fpp": {
        "direction": ("ints", None),
        "schedule": ("ints", [10, 20, 40, 80]),
        "replicas": ("int", 16),
        "weights": ("str", "theta"),
    },
    "scaling": {
        "direction": ("ints", None),
        "lams": ("floats", [5.0, 20.0, 50.0]),
        "schedule": ("ints", [40]),
        "replicas": ("int", 1),
    },
    "ldp-curve": {
        "speeds": ("floats", [0.0, 0.25, 0.5, 0.75]),
        "t": ("float", 40.0),
        "samples": ("int", 100000),
        "theory": ("bool", None),
    },
}


class ConfigError(Exception):
    """Configuration problem; the message names the file and field."""


def parse_range(text: str) -> list[float]:
    """``start:stop:step`` (stop inclusive) or a comma list."""
    text = str(text).strip()
    if ":" not in text:
        return [float(v) for v in text.split(",") if v.strip()]
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"range {text!r} is not start:stop:step")
    a, b, s = (float(p) for p in parts)
    if s <= 0 or b < a:
        raise ValueError(f"range {text!r} needs step > 0 and stop >= start")
    n = int(math.floor((b - a) / s + 1e-9)) + 1
    return [round(a + i * s, 12) for i in range(n)]


def _coerce(kind, value, where):
    try:
        if kind == "int":
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "str":
            if not isinstance(value, str):
                raise ValueError
            return value
        if kind == "bool":
            if not isinstance(value, bool):
                raise ValueError
            return value
        if kind == "ints":
            if isinstance(value, str):
                value = value.split(",")
            return [int(v) for v in value]
        if kind == "floats":
            if isinstance(value, str):
                return parse_range(value)
            return [float(v) for v in value]
    except (TypeError, ValueError):
        pass
    raise ConfigError(f"{where}: expected {kind}, got {value!r}")


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    env = raw.get("environment", raw if "dim" in raw else None)
    if env is None:
        raise ConfigError(f"{path}: field 'environment': missing")
    try:
        spec = EnvironmentSpec.from_json(env)
    except SpecError as exc:
        raise ConfigError(f"{path}: field 'environment.{exc.where}': {exc.message}") from None
    cfg = {"path": str(path), "raw": raw, "spec": spec}
    for key in ("seed", "tol"):
        if key in raw:
            cfg[key] = _coerce("int" if key == "seed" else "float", raw[key], f"{path}: field '{key}'")
    for section, fields in SCHEMA.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"{path}: field '{section}': must be an object")
        unknown = sorted(set(given) - set(fields))
        if unknown:
            raise ConfigError(f"{path}: field '{section}.{unknown[0]}': unknown field")
        params = {}
        for name, (kind, default) in fields.items():
            params[name] = (
                _coerce(kind, given[name], f"{path}: field '{section}.{name}'") if name in given else default
            )
        cfg[section] = params
    return cfg


def _direction(params, spec, section):
    d = params.get("direction")
    if d is None:
        d = [1] + [0] * (spec.dim - 1)
    if len(d) != spec.dim or not any(d):
        raise ConfigError(f"field '{section}.direction': need {spec.dim} integers, not all zero")
    return tuple(d)


# --------------------------------------------------------------------------
# runners: each returns (flagged, [paths])


def run_lyapunov(spec, p, seed, tol, workers, out):
    X = _direction(p, spec, "lyapunov")
    rows, summary, flagged = [], [], False
    for lam in p["lams"]:
        est = estimate_alpha(spec, X, lam, p["schedule"], p["replicas"], seed, tol, workers)
        rows.extend((lam, n, r, v, ok) for n, r, v, ok in est.rows())
        summary.append((lam, est.point, est.se, est.argmin_n, est.bounds.c1, est.bounds.c2,
                        est.within_sandwich(), est.flagged))
        flagged |= est.flagged
    a = out / "lyapunov.csv"
    s = out / "lyapunov_summary.csv"
    write_csv(a, COLUMNS["lyapunov"], rows)
    write_csv(s, COLUMNS["lyapunov_summary"], summary)
    svg = plot_csv(s, out / "lyapunov.svg", "lam", ["alpha", "c1", "c2"], "Lyapunov exponent", "per unit length")
    return flagged, [a, s, svg]


def _alpha_source(spec, X, p, seed):
    if spec.dim == 1:
        return OracleAlpha(spec, X, n=p["n"], replicas=p["replicas"], seed=seed)
    axes = [i for i, v in enumerate(X) if v]
    if len(axes) != 1 or X[axes[0]] < 0:
        raise ConfigError("field 'rate.direction': only positive coordinate axes are supported for dim >= 2")
    return SolverAlpha(spec, axis=axes[0], seed=seed)


def run_rate(spec, p, seed, tol, workers, out):
    X = _direction(p, spec, "rate")
    alpha = _alpha_source(spec, X, p, seed)
    norm1 = sum(abs(v) for v in X)
    norm2 = math.sqrt(sum(v * v for v in X))
    try:
        curve = rate_curve(alpha, p["speeds"], X, p["lam_max"], workers=workers)
    except NonConcaveError as exc:
        print(f"rate: {exc}", file=sys.stderr)
        return True, []
    P = np.array([k.probs for k in spec.kernels])
    max_log = float(np.max(np.asarray(spec.kernel_weights) @ -np.log(P)))
    # the evaluated point is speed * X in one dimension, speed * e_axis otherwise
    l1, l2 = (norm1, norm2) if spec.dim == 1 else (1.0, 1.0)
    rows = []
    for pt in curve.points:
        lo, hi = pt.interval
        r2 = pt.speed * l2
        rows.append((pt.speed, pt.value, pt.lam_star, pt.attained, lo, hi,
                     0.5 * spec.dim * spec.mean_holding() * r2 * r2, pt.speed * l1 * max_log))
    path = out / "rate.csv"
    write_csv(path, COLUMNS["rate"], rows)
    svg = plot_csv(path, out / "rate.svg", "speed", ["I", "quadratic"], "Rate function", "I")
    return False, [path, svg]


def run_fpp(spec, p, seed, tol, workers, out):
    X = _direction(p, spec, "fpp")
    est = estimate_time_constant(spec, X, p["schedule"], p["replicas"], seed, weights=p["weights"], workers=workers)
    a = out / "fpp.csv"
    s = out / "fpp_summary.csv"
    write_csv(a, COLUMNS["fpp"], list(est.rows()))
    write_csv(s, COLUMNS["fpp_summary"], [
        (n, est.means[i], est.spreads[i], float(est.straight[i].mean()), bool(est.touched[i].any()))
        for i, n in enumerate(est.schedule)
    ])
    svg = plot_csv(s, out / "fpp.svg", "n", ["mean", "straight_mean"], "Passage time per step", "T / n")
    return est.flagged, [a, s, svg]


def run_scaling(spec, p, seed, tol, workers, out):
    X = _direction(p, spec, "scaling")
    try:
        rows = lyapunov_fpp_scaling(spec, X, p["lams"], tol, p["schedule"], p["replicas"], seed, workers=workers)
    except SpecError as exc:
        raise ConfigError(f"field 'environment.{exc.where}': {exc.message}") from None
    path = out / "scaling.csv"
    write_csv(path, COLUMNS["scaling"], [(r.lam, r.alpha, r.scale, r.ratio, r.nu, r.flagged) for r in rows])
    svg = plot_csv(path, out / "scaling.svg", "lam", ["ratio", "nu"], "alpha / L against nu", "")
    return any(r.flagged for r in rows), [path, svg]


def run_ldp(spec, p, seed, tol, workers, out):
    theory = p["theory"] if p["theory"] is not None else spec.dim == 1
    rate, table = None, {}
    if theory:
        X = (1,) + (0,) * (spec.dim - 1)
        alpha = _alpha_source(spec, X, {"n": 1000, "replicas": 1}, seed)
        pos = sorted({v for v in p["speeds"] if v >= 0})
        curve = rate_curve(alpha, pos, X, workers=workers)
        table = {p.speed: p for p in curve.points}
        rate = lambda v: table[v].value if v in table else math.nan  # noqa: E731
    rows = empirical_ldp_curve(spec, p["speeds"], p["t"], p["samples"], seed, rate=rate, workers=workers)
    path = out / "ldp.csv"
    attained = [table[r.speed].attained if rate is not None and r.speed in table else "" for r in rows]
    write_csv(path, COLUMNS["ldp"], [
        (r.speed, r.empirical, r.theoretical, a, r.samples, r.hits, r.flag) for r, a in zip(rows, attained)
    ])
    svg = plot_csv(path, out / "ldp.svg", "speed", ["empirical_rate", "I"], f"Empirical rate at t={p['t']:g}", "rate")
    return any(r.flag == "exited" for r in rows), [path, svg]


RUNNERS = {
    "lyapunov": run_lyapunov,
    "rate": run_rate,
    "fpp": run_fpp,
    "scaling": run_scaling,
    "ldp-curve": run_ldp,
}


def _parser():
    ap = argparse.ArgumentParser(prog="rwreht", description="Random walks with random holding times.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, need_config=True):
        p.add_argument("--config", required=need_config, help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--parallelism", type=int, default=1, help="worker processes")
        p.add_argument("--tol", type=float, default=None, help="solver tolerance (overrides config)")

    p = sub.add_parser("lyapunov", help="estimate alpha_lam(x) with sandwich bounds")
    common(p)
    p.add_argument("--lams", help="lam values, start:stop:step or comma list")
    p.add_argument("--replicas", type=int)
    p = sub.add_parser("rate", help="rate function along a ray")
    common(p)
    p.add_argument("--speeds", help="speeds, start:stop:step or comma list")
    p = sub.add_parser("fpp", help="first-passage time constant")
    common(p)
    p.add_argument("--replicas", type=int)
    p = sub.add_parser("scaling", help="alpha_lam / L(lam) against the time constant")
    common(p)
    p.add_argument("--lams", help="lam values, start:stop:step or comma list")
    p = sub.add_parser("ldp-curve", help="empirical large-deviation rates")
    common(p)
    p.add_argument("--speeds", help="speeds, start:stop:step or comma list")
    p.add_argument("--samples", type=int)
    p.add_argument("--horizon", type=float, help="time t")
    p = sub.add_parser("validate", help="run the invariant suite")
    common(p, need_config=False)
    lvl = p.add_mutually_exclusive_group()
    lvl.add_argument("--quick", action="store_const", dest="level", const="quick")
    lvl.add_argument("--full", action="store_const", dest="level", const="full")
    p.add_argument("--manifest", help="verify the output digests recorded in this manifest")
    p.set_defaults(level="quick")
    return ap


def _apply_overrides(cfg, args):
    section = cfg[args.command]
    try:
        if getattr(args, "lams", None):
            section["lams"] = parse_range(args.lams)
        if getattr(args, "speeds", None):
            section["speeds"] = parse_range(args.speeds)
    except ValueError as exc:
        raise ConfigError(f"command line: {exc}") from None
    for flag, key in (("replicas", "replicas"), ("samples", "samples"), ("horizon", "t")):
        v = getattr(args, flag, None)
        if v is not None:
            section[key] = v


def replay_manifest(path) -> list[str]:
    """Re-run a manifest's command from its echoed configuration and seed.

    Returns the CSV outputs whose digest differs from the recorded one.
    """
    import tempfile

    m = RunManifest.read(path)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg_path = tmp / "config.json"
        cfg_path.write_text(json.dumps(m.config), encoding="utf-8")
        out = tmp / "out"
        code = main([m.command, "--config", str(cfg_path), "--seed", str(m.seed), "--out", str(out)])
        if code == 2:
            return sorted(m.outputs)
        fresh = RunManifest.read(out / "manifest.json").outputs
    return sorted(n for n, d in m.outputs.items() if n.endswith(".csv") and fresh.get(n) != d)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out = Path(args.out)
    if args.command == "validate":
        from .validate import run_suite

        return run_suite(args.level, out=out, manifest=args.manifest)
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        tol = args.tol if args.tol is not None else cfg.get("tol", 1e-6)
        if args.parallelism < 1:
            raise ConfigError("--parallelism must be >= 1")
        out.mkdir(parents=True, exist_ok=True)
        echo = dict(cfg["raw"])
        echo[args.command] = {k: v for k, v in cfg[args.command].items() if v is not None}
        echo["seed"], echo["tol"] = int(seed), float(tol)
        manifest = RunManifest(args.command, echo, int(seed), __version__)
        params = cfg[args.command]
        flagged, paths = RUNNERS[args.command](cfg["spec"], params, int(seed), float(tol), args.parallelism, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SpecError as exc:
        print(f"config error: {args.config}: {exc}", file=sys.stderr)
        return 2
    for path in paths:
        manifest.record(path)
    manifest.flags = {"flagged": bool(flagged)}
    manifest.write(out)
    print(f"{args.command}: wrote {', '.join(p.name for p in paths)} to {out}" + (" (flagged)" if flagged else ""))
    return 1 if flagged else 0


if __name__ == "__main__":
    sys.exit(main())
