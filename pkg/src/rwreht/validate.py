"""Invariant suites run by ``rwreht validate``.

Each check returns ``(passed, measured)`` where ``measured`` is a small dict
of the numbers it compared. The quick suite runs in well under a minute; the
full suite adds the slower two-dimensional and Monte Carlo checks.
"""
from __future__ import annotations

import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from ._hashing import STREAM_HOLD, uniform
from .crossing import solve_crossing
from .fpp import WeightField, estimate_time_constant, passage_time, passage_time_bruteforce
from .io import RunManifest, verify_manifest, write_csv
from .lyapunov import estimate_alpha, sandwich_bounds
from .montecarlo import (
    empirical_ldp_curve,
    estimate_crossing_mc,
    srw_tail_probability,
    tilted_hitting_sampler,
)
from .oracle1d import exact_a_1d, step_crossings
from .rate import OracleAlpha, SolverAlpha, large_x_asymptote, rate_curve, rate_function
from .scenery import (
    EnvironmentSpec,
    Exponential,
    TransitionKernel,
    sample_environment,
)

__all__ = ["QUICK", "FULL", "run_checks", "run_suite", "cramer"]


def cramer(v):
    """Rate of the simple symmetric walk on Z with unit holding times."""
    if v == 0:
        return 0.0
    if v == 1:
        return math.log(2.0)
    return 0.5 * (1 + v) * math.log1p(v) + 0.5 * (1 - v) * math.log1p(-v)


def random_1d_spec():
    kernels = [TransitionKernel((p, 1 - p)) for p in (0.3, 0.45, 0.6, 0.7)]
    laws = [Exponential(1.0), Exponential(2.0), Exponential(0.5)]
    return EnvironmentSpec(1, tuple(kernels), tuple(laws))


def random_2d_spec():
    kernels = [
        TransitionKernel((0.3, 0.2, 0.25, 0.25)),
        TransitionKernel((0.2, 0.3, 0.3, 0.2)),
        TransitionKernel((0.25, 0.25, 0.2, 0.3)),
    ]
    return EnvironmentSpec(2, tuple(kernels), (Exponential(1.0), Exponential(3.0)))


# --------------------------------------------------------------------------
# checks


def check_closed_form_1d():
    spec = EnvironmentSpec.srw(1)
    worst = 0.0
    for lam in (0.1, 1.0, 10.0):
        exact = math.acosh(math.exp(lam))
        env = sample_environment(spec, ([-400], [1]), 0)
        a_solver = solve_crossing(env, (0,), [(1,)], lam, 1e-12).cost
        a_oracle = exact_a_1d(env, 0, 1, lam)
        worst = max(worst, abs(a_solver - exact), abs(a_oracle - exact))
    return worst < 1e-6, {"max_abs_error": worst}


def check_sandwich():
    spec = EnvironmentSpec.srw(1, Exponential(1.0))
    out = {}
    ok = True
    for lam in (0.5, 1.0, 2.0):
        est = estimate_alpha(spec, (1,), lam, (40,), 4, 0)
        b = sandwich_bounds(spec, lam)
        out[f"lam={lam:g}"] = [b.c1, est.point, b.c2]
        ok &= b.c1 <= est.point <= b.c2
    return ok, out


def check_additivity_1d(count=5):
    spec = random_1d_spec()
    worst = 0.0
    for s in range(count):
        env = sample_environment(spec, ([-60], [30]), s)
        sc = step_crossings(env, 1.0)
        unit = sum(sc.cost(k) for k in range(0, 30))
        worst = max(worst, abs(exact_a_1d(env, 0, 30, 1.0, left_cut=-60) - unit))
    return worst < 1e-8, {"max_abs_error": worst}


def check_triangle_2d(count=3):
    spec = random_2d_spec()
    rng_pts = [((0, 0), (4, 1), (2, -3)), ((1, 1), (-3, 2), (0, 4))]
    worst = -math.inf
    for s in range(count):
        env = sample_environment(spec, ((-12, -12), (12, 12)), s)
        for x, y, z in rng_pts:
            a = {}
            for p, q in ((x, y), (x, z), (z, y)):
                a[p, q] = solve_crossing(env, p, [q], 0.5, 1e-12).cost
            worst = max(worst, a[x, y] - a[x, z] - a[z, y])
    return worst <= 1e-9, {"max_violation": worst}


def check_fpp_bruteforce(count=20):
    spec = EnvironmentSpec.srw(2, Exponential(1.0))
    mism = 0
    for s in range(count):
        fld = WeightField.from_spec(spec, ((0, 0), (3, 3)), s, "sample")
        if passage_time(fld, (0, 0), (3, 3)).value != passage_time_bruteforce(fld, (0, 0), (3, 3)).value:
            mism += 1
    ok_const = True
    from .scenery import Deterministic

    est = estimate_time_constant(EnvironmentSpec.srw(2, Deterministic(1.5)), (1, 2), (5, 10), 2)
    ok_const = bool(np.all(est.values == 1.5 * 3))
    return mism == 0 and ok_const, {"mismatches": mism, "constant_exact": ok_const}


def check_scaling():
    spec = EnvironmentSpec.srw(1)
    ratios = [estimate_alpha(spec, (1,), lam, (40,), 1).point / lam for lam in (5.0, 20.0, 50.0)]
    ok = abs(ratios[-1] - 1.013863) < 1e-3 and ratios[0] > ratios[1] > ratios[2] > 1
    return ok, {"ratios": ratios}


def check_small_x_1d():
    pt = rate_function(OracleAlpha(EnvironmentSpec.srw(1), (1,), n=1000), 0.05)
    ratio = pt.value / (0.5 * 0.05**2)
    return 0.99 <= ratio <= 1.01, {"I": pt.value, "ratio": ratio}


def check_small_x_2d():
    pt = rate_function(SolverAlpha(EnvironmentSpec.srw(2)), 0.05)
    ratio = pt.value / 0.05**2
    return 0.9 <= ratio <= 1.1, {"I": pt.value, "ratio": ratio}


def check_large_x():
    from .scenery import TauberianScale

    a = large_x_asymptote(TauberianScale("log", 1.0), 1.0, math.e**2)
    b = large_x_asymptote(TauberianScale("power", 1.0, 0.5), 1.0, 2.0)
    ok = abs(a.closed_form - math.e**2) < 1e-12 and abs(b.closed_form - 1.0) < 1e-12
    return ok, {"log": a.closed_form, "power": b.closed_form}


def check_cramer():
    speeds = [round(0.1 * k, 10) for k in range(1, 10)]
    curve = rate_curve(OracleAlpha(EnvironmentSpec.srw(1), (1,), n=200), speeds)
    err = max(abs(p.value - cramer(p.speed)) for p in curve.points)
    return err < 1e-6 and curve.midpoint_convex(), {"max_abs_error": err}


def check_rate_upper_bound():
    spec = random_1d_spec()
    alpha = OracleAlpha(spec, (1,), n=400, replicas=1)
    m = spec.mean_holding()
    P = np.array([k.probs for k in spec.kernels])
    cap = float(np.max(np.asarray(spec.kernel_weights) @ -np.log(P)))
    speeds = [0.25 / m, 0.5 / m, 1.0 / m]
    worst = -math.inf
    for v in speeds:
        worst = max(worst, rate_function(alpha, v).value - v * cap)
    return worst <= 1e-9, {"max_excess": worst}


def check_hash_streams(draws=100_000):
    u = np.array([uniform(7, STREAM_HOLD, 3, k) for k in range(draws)])
    x = u - u.mean()
    lags = {}
    ok = abs(u.mean() - 0.5) < 3 * math.sqrt(1 / 12 / draws)
    for lag in (1, 2, 5):
        r = float(np.dot(x[:-lag], x[lag:]) / np.dot(x, x))
        lags[lag] = r
        ok &= abs(r) < 3 / math.sqrt(draws)
    again = uniform(7, STREAM_HOLD, 3, 17)
    ok &= again == u[17]
    return bool(ok), {"mean": float(u.mean()), "lag_corr": lags}


def check_mc_crossing():
    spec = EnvironmentSpec.srw(1)
    env = sample_environment(spec, ([-800], [1]), 0)
    est = estimate_crossing_mc(env, (0,), (1,), 1.0, 20_000, 1)
    exact = math.exp(-math.acosh(math.e))
    z = abs(est.estimate - exact) / est.se
    return z < 3.3, {"estimate": est.estimate, "se": est.se, "exact": exact}


def check_tilted():
    env = sample_environment(EnvironmentSpec.srw(1), ([-100], [40]), 0)
    ts = tilted_hitting_sampler(env, (0,), (40,), 1.0, 5000, 0)
    m = ts.weighted_mean()
    return 1.05 <= m <= 1.10 and ts.ess >= 100, {"mean": m, "ess": ts.ess}


def check_ldp():
    rows = empirical_ldp_curve(EnvironmentSpec.srw(1), [0.5], 40, 10**6, 0)
    exact = -math.log(srw_tail_probability(40, 20)) / 40
    rel = abs(rows[0].empirical - exact) / exact
    return rel <= 0.05, {"empirical": rows[0].empirical, "finite_t_exact": exact, "relative": rel}


def check_manifest():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        csv_path = d / "x.csv"
        write_csv(csv_path, ["a"], [(1.0,)])
        m = RunManifest("validate", {}, 0, "test")
        m.record(csv_path)
        mp = m.write(d)
        clean = verify_manifest(mp) == []
        csv_path.write_text("a\n2\n", encoding="utf-8")
        tampered = verify_manifest(mp) == ["x.csv"]
    return clean and tampered, {"clean": clean, "tamper_detected": tampered}


QUICK = [
    ("closed_form_alpha_1d", check_closed_form_1d),
    ("sandwich_bounds", check_sandwich),
    ("additivity_1d", check_additivity_1d),
    ("triangle_2d", check_triangle_2d),
    ("fpp_bruteforce", check_fpp_bruteforce),
    ("fpp_scaling_ratio", check_scaling),
    ("small_x_1d", check_small_x_1d),
    ("large_x_closed_forms", check_large_x),
    ("cramer_rate", check_cramer),
    ("rate_upper_bound", check_rate_upper_bound),
    ("hash_streams", check_hash_streams),
    ("mc_crossing", check_mc_crossing),
    ("tilted_mean", check_tilted),
    ("manifest_digests", check_manifest),
]

FULL = QUICK + [
    ("small_x_2d", check_small_x_2d),
    ("empirical_ldp_finite_t", check_ldp),
]


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def run_checks(level="quick"):
    report = []
    for name, fn in (QUICK if level == "quick" else FULL):
        t0 = time.perf_counter()
        try:
            passed, measured = fn()
        except Exception as exc:  # a crash is a failure with a reason
            passed, measured = False, {"error": f"{type(exc).__name__}: {exc}"}
        report.append({
            "name": name,
            "passed": bool(passed),
            "measured": _jsonable(measured),
            "seconds": round(time.perf_counter() - t0, 3),
        })
    return report


def run_suite(level="quick", out=None, manifest=None) -> int:
    """Run a suite, print a JSON report; nonzero exit names the first failure."""
    report = run_checks(level)
    if manifest:
        from .cli import replay_manifest

        stale = verify_manifest(manifest)
        report.append({"name": "manifest_digests_on_disk", "passed": not stale, "measured": {"mismatched": stale}})
        diff = replay_manifest(manifest)
        report.append({"name": "manifest_reproducibility", "passed": not diff, "measured": {"mismatched": diff}})
    text = json.dumps({"level": level, "checks": report}, indent=2)
    print(text)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"validate_{level}.json").write_text(text + "\n", encoding="utf-8")
    failed = [r["name"] for r in report if not r["passed"]]
    if failed:
        print(f"validate: FAILED {failed[0]}", file=sys.stderr)
        return 1
    return 0
