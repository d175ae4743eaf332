"""Lyapunov exponents from finite-distance crossing costs.

``alpha_lam(x)`` is the limit of ``a_lam(0, n x) / n``. The expected sequence
is subadditive, so the estimate is the infimum over the schedule of the
replica means. One dimension uses the exact recursion; higher dimensions use
the box solver with adaptive growth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import _hashing
from .crossing import adaptive_box
from .oracle1d import exact_a_1d_flagged
from .parallel import pmap
from .scenery import EnvironmentSpec, sample_environment

__all__ = [
    "SandwichBounds",
    "LyapunovEstimate",
    "DerivativeEstimate",
    "sandwich_bounds",
    "estimate_alpha",
    "crossing_cost_to",
    "shape_residual",
    "alpha_derivative",
    "lattice_point",
    "integer_direction",
]

DEFAULT_SCHEDULE = (10, 20, 40, 80, 160)
DEFAULT_REPLICAS = 16
REFERENCE_OFFSET = 1_000_003


@dataclass(frozen=True)
class SandwichBounds:
    c1: float
    c2: float


def sandwich_bounds(spec: EnvironmentSpec, lam: float) -> SandwichBounds:
    """Per-unit-length lower and upper bounds on the expected crossing cost.

    ``c1 = -log E[exp(-theta)]`` and
    ``c2 = max_e E[-log omega(0, e)] + E[theta]``, evaluated exactly over the
    catalogues.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    lw = np.asarray(spec.law_weights)
    theta = spec.theta_table(lam)
    c1 = -float(logsumexp(-theta, b=lw))
    kw = np.asarray(spec.kernel_weights)
    P = np.array([k.probs for k in spec.kernels])
    c2 = float(np.max(kw @ -np.log(P))) + float(lw @ theta)
    return SandwichBounds(c1, c2)


def integer_direction(x) -> tuple[tuple[int, ...], int]:
    """Scale a rational vector to integers: returns ``(X, q)`` with ``X = q x``."""
    fr = [v if isinstance(v, Fraction) else Fraction(v).limit_denominator(10**9) for v in np.ravel(x)]
    q = reduce(math.lcm, (f.denominator for f in fr), 1)
    X = tuple(int(f * q) for f in fr)
    if not any(X):
        raise ValueError("direction must be nonzero")
    return X, q


def lattice_point(x) -> tuple[int, ...]:
    """Nearest lattice point in l1, ties broken toward the lexicographically smallest."""
    return tuple(int(math.ceil(v - 0.5)) for v in np.ravel(np.asarray(x, dtype=float)))


def crossing_cost_to(spec, target, lam, seed, tol=1e-6):
    """``(a_lam(0, target), ok)`` on the realisation ``seed``, by the best route."""
    target = tuple(int(v) for v in target)
    if not any(target):
        return 0.0, True
    if spec.dim == 1:
        y = target[0]
        env = sample_environment(spec, ([min(0, y)], [max(0, y)]), seed)
        a, ok, _ = exact_a_1d_flagged(env, 0, y, lam)
        return a, ok
    sol = adaptive_box(spec, (0,) * spec.dim, target, lam, tol=tol, seed=seed)
    return sol.cost, bool(sol.converged and sol.box_converged)


def _alpha_task(args):
    spec, X, lam, n, seed, tol = args
    a, ok = crossing_cost_to(spec, tuple(n * v for v in X), lam, seed, tol)
    return a, ok


@dataclass
class LyapunovEstimate:
    direction: tuple
    lam: float
    schedule: tuple[int, ...]
    values: np.ndarray = field(repr=False)  # (len(schedule), replicas), a/n per unit of x
    ok: np.ndarray = field(repr=False)
    point: float
    se: float
    means: np.ndarray = field(repr=False)
    ses: np.ndarray = field(repr=False)
    bounds: SandwichBounds
    norm: float  # l1 length of the direction

    @property
    def argmin_n(self) -> int:
        return self.schedule[int(np.argmin(self.means))]

    @property
    def flagged(self) -> bool:
        return not bool(np.all(self.ok))

    def within_sandwich(self, k: float = 3.0) -> bool:
        return (
            self.bounds.c1 * self.norm - k * self.se
            <= self.point
            <= self.bounds.c2 * self.norm + k * self.se
        )

    def variance(self, n: int) -> float:
        row = self.values[self.schedule.index(n)]
        return float(np.var(row, ddof=1)) if row.size > 1 else 0.0

    def rows(self):
        for i, n in enumerate(self.schedule):
            for r in range(self.values.shape[1]):
                yield n, r, float(self.values[i, r]), bool(self.ok[i, r])


def estimate_alpha(
    spec: EnvironmentSpec,
    x,
    lam: float,
    schedule: Sequence[int] = DEFAULT_SCHEDULE,
    replicas: int = DEFAULT_REPLICAS,
    seed: int = 0,
    tol: float = 1e-6,
    workers: int = 1,
) -> LyapunovEstimate:
    """Estimate ``alpha_lam(x)`` for a rational direction ``x``.

    Replica ``r`` uses the realisation ``derive_seed(seed, r)`` at every ``n``.
    The value recorded for (n, r) is ``a_lam(0, n q x) / (n q)`` where ``q``
    clears the denominators of ``x``.
    """
    schedule = tuple(int(n) for n in schedule)
    if any(b <= a for a, b in zip(schedule, schedule[1:])) or schedule[0] < 1:
        raise ValueError("schedule must be increasing positive integers")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    X, q = integer_direction(x)
    if len(X) != spec.dim:
        raise ValueError(f"direction has {len(X)} coordinates, spec has dim {spec.dim}")
    seeds = [_hashing.derive_seed(seed, r) for r in range(replicas)]
    tasks = [(spec, X, lam, n, s, tol) for n in schedule for s in seeds]
    out = pmap(_alpha_task, tasks, workers)
    vals = np.array([a for a, _ in out]).reshape(len(schedule), replicas)
    ok = np.array([o for _, o in out]).reshape(len(schedule), replicas)
    vals = vals / (np.array(schedule)[:, None] * q)
    means = vals.mean(axis=1)
    ses = vals.std(axis=1, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.zeros(len(schedule))
    i = int(np.argmin(means))
    norm = float(sum(abs(Fraction(v).limit_denominator(10**9)) for v in np.ravel(x)))
    return LyapunovEstimate(
        direction=tuple(np.ravel(x).tolist()),
        lam=float(lam),
        schedule=schedule,
        values=vals,
        ok=ok,
        point=float(means[i]),
        se=float(ses[i]),
        means=means,
        ses=ses,
        bounds=sandwich_bounds(spec, lam),
        norm=norm,
    )


def _unit_direction(p):
    X, _ = integer_direction(p)
    g = reduce(math.gcd, (abs(v) for v in X))
    return tuple(v // g for v in X)


def shape_residual(
    spec: EnvironmentSpec,
    lam: float,
    points,
    seed: int = 0,
    alpha_hat: Callable | None = None,
    reference_n: int = 2000,
    replicas: int = DEFAULT_REPLICAS,
    workers: int = 1,
):
    """``(|x_n|, (a_lam(0, [x_n]) - alpha(x_n)) / |x_n|)`` along ``points``.

    ``a`` is computed on the single realisation ``seed``. ``alpha_hat`` maps a
    lattice point to the exponent; by default each distinct primitive lattice
    direction gets an independent replica estimate at ``reference_n`` and
    homogeneity supplies the rest. Lengths are l1.
    """
    pts = [lattice_point(p) for p in points]
    if alpha_hat is None:
        cache = {}
        ref_seed = _hashing.derive_seed(seed, REFERENCE_OFFSET)

        def alpha_hat(z):
            u = _unit_direction(z)
            if u not in cache:
                est = estimate_alpha(spec, u, lam, (reference_n,), replicas, ref_seed, workers=workers)
                cache[u] = est.point / sum(abs(v) for v in u)
            return cache[u] * sum(abs(v) for v in z)

    costs = pmap(_cost_task, [(spec, p, lam, seed) for p in pts], workers)
    out = []
    for p, (a, _) in zip(pts, costs):
        length = float(sum(abs(v) for v in p))
        if length == 0:
            continue
        out.append((length, (a - alpha_hat(p)) / length))
    return out


def _cost_task(args):
    spec, p, lam, seed = args
    return crossing_cost_to(spec, p, lam, seed)


@dataclass(frozen=True)
class DerivativeEstimate:
    left: float
    right: float
    central: float
    left_se: float
    right_se: float
    flagged: bool


def alpha_derivative(
    spec: EnvironmentSpec,
    x,
    lam: float,
    h: float,
    n: int = 160,
    replicas: int = DEFAULT_REPLICAS,
    seed: int = 0,
    workers: int = 1,
) -> DerivativeEstimate:
    """One-sided difference quotients of ``lam -> alpha_lam(x)``.

    The three evaluations share replica realisations, so the paired
    differences carry the noise. A slope is flagged when its standard error
    exceeds its magnitude.
    """
    if not lam > h > 0:
        raise ValueError("need lam > h > 0")
    ests = [estimate_alpha(spec, x, l, (n,), replicas, seed, workers=workers) for l in (lam - h, lam, lam + h)]
    lo, mid, hi = (e.values[0] for e in ests)
    dl = (mid - lo) / h
    dr = (hi - mid) / h

    def se(v):
        return float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0

    left, right = float(dl.mean()), float(dr.mean())
    lse, rse = se(dl), se(dr)
    flagged = lse > abs(left) or rse > abs(right)
    return DerivativeEstimate(left, right, float((hi - lo).mean() / (2 * h)), lse, rse, flagged)
