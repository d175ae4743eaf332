"""Direct simulation of the walk with holding times.

Every random draw is a hash of its key: step ``m`` of sample ``i`` uses
``(seed, STEP, i, m)``, and the holding time of the ``k``-th visit of sample
``i`` to site ``z`` uses ``(seed, HOLD, i, z, k)``. Samples are processed in
fixed-size chunks and reduced in sample order, so results do not depend on
how chunks are spread over workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np
from scipy.special import gammaln, logsumexp

from ._hashing import STREAM_HOLD, STREAM_SAMPLE, STREAM_STEP, combine, root, to_unit
from ._sampling import DETERMINISTIC, EXPONENTIAL, GAMMA, draw_holding, law_table
from .crossing import solve_crossing
from .oracle1d import exact_a_1d
from .parallel import pmap
from .scenery import Deterministic, EnvironmentBox, EnvironmentSpec, sample_environment

__all__ = [
    "PathSample",
    "CrossingEstimate",
    "TiltedSampleSet",
    "LdpRow",
    "simulate_path",
    "estimate_crossing_mc",
    "tilted_hitting_sampler",
    "empirical_ldp_curve",
    "srw_tail_probability",
]

CHUNK = 1 << 14
MAX_EXPONENT = 745.0
MIN_ESS = 50.0


# --------------------------------------------------------------------------
# box geometry shared by the kernels


def _geometry(env: EnvironmentBox):
    lo = np.array(env.lo, dtype=np.int64)
    hi = np.array(env.hi, dtype=np.int64)
    strides = np.array(
        [int(np.prod(env.shape[a + 1:])) for a in range(env.dim)], dtype=np.int64
    )
    return lo, hi, strides


def _site_laws(env: EnvironmentBox):
    codes, p1, p2 = law_table(env.spec.laws)
    li = env.law_index.ravel()
    return codes[li], p1[li], p2[li]


@nb.njit(cache=True)
def _flat(pos, lo, strides):
    k = 0
    for a in range(pos.shape[0]):
        k += (pos[a] - lo[a]) * strides[a]
    return k


@nb.njit(cache=True)
def _choose(P, i, u):
    k = P.shape[1]
    acc = 0.0
    for j in range(k - 1):
        acc += P[i, j]
        if u < acc:
            return j
    return k - 1


@nb.njit(cache=True)
def _move(pos, j, lo, hi):
    # apply direction j (order +e1, -e1, +e2, ...); False when the box is left
    a = j // 2
    pos[a] += 1 if j % 2 == 0 else -1
    return lo[a] <= pos[a] <= hi[a]


@nb.njit(cache=True)
def _hold_hash(seed, sample, pos, visit):
    h = combine(root(seed, STREAM_HOLD), sample)
    for a in range(pos.shape[0]):
        h = combine(h, pos[a])
    return combine(h, visit)


# --------------------------------------------------------------------------
# single paths


@dataclass
class PathSample:
    sites: np.ndarray = field(repr=False)  # (N + 1, d)
    holds: np.ndarray = field(repr=False)  # (N,)
    horizon: float
    exited: bool
    capped: bool

    @property
    def clock(self) -> np.ndarray:
        return np.cumsum(self.holds)

    @property
    def jumps(self) -> int:
        return int(self.holds.size)

    def position(self, t: float) -> np.ndarray:
        """``Z_t``: the site occupied at time ``t``."""
        if t > self.horizon:
            raise ValueError("t beyond the simulated horizon")
        n = int(np.searchsorted(self.clock, t, side="right"))
        return self.sites[n]

    @property
    def flagged(self) -> bool:
        return self.exited or self.capped


@nb.njit(cache=True)
def _path_kernel(start, lo, hi, strides, P, codes, p1, p2, size, seed, sample, horizon, max_jumps):
    d = start.shape[0]
    pos = start.copy()
    visits = np.zeros(size, dtype=np.int64)
    sites = np.empty((max_jumps + 1, d), dtype=np.int64)
    holds = np.empty(max_jumps)
    sites[0] = pos
    clock = 0.0
    n = 0
    hstep = combine(root(seed, STREAM_STEP), sample)
    while n < max_jumps:
        i = _flat(pos, lo, strides)
        tau = draw_holding(codes[i], p1[i], p2[i], _hold_hash(seed, sample, pos, visits[i]))
        visits[i] += 1
        if clock + tau > horizon:
            return sites[: n + 1], holds[:n], 0
        clock += tau
        holds[n] = tau
        j = _choose(P, i, to_unit(combine(hstep, n)))
        n += 1
        if not _move(pos, j, lo, hi):
            sites[n] = pos
            return sites[: n + 1], holds[:n], 1
        sites[n] = pos
    return sites[: n + 1], holds[:n], 2


def simulate_path(env: EnvironmentBox, start, horizon: float, seed: int, sample: int = 0,
                  max_jumps: int = 10**7) -> PathSample:
    """Run the continuous-time walk from ``start`` up to time ``horizon``.

    Leaving the box stops the path with ``exited=True``; the last recorded
    site is then the first site outside the box.
    """
    if not math.isfinite(horizon) or horizon < 0:
        raise ValueError("horizon must be finite and nonnegative")
    start = np.array(start, dtype=np.int64)
    env.offset(tuple(start))
    lo, hi, strides = _geometry(env)
    codes, p1, p2 = _site_laws(env)
    P = env.probs().reshape(env.size, -1)
    sites, holds, status = _path_kernel(
        start, lo, hi, strides, P, codes, p1, p2, env.size, int(seed), int(sample), float(horizon), int(max_jumps)
    )
    return PathSample(sites.copy(), holds.copy(), float(horizon), status == 1, status == 2)


# --------------------------------------------------------------------------
# crossing functional by direct sampling


@nb.njit(cache=True)
def _crossing_kernel(start, target, lo, hi, strides, P, theta, seed, first, count, max_exponent):
    out = np.zeros(count)
    status = np.zeros(count, dtype=np.int64)  # 0 hit, 1 exited, 2 truncated
    for s in range(count):
        sample = first + s
        pos = start.copy()
        hstep = combine(root(seed, STREAM_SAMPLE), sample)
        acc = 0.0
        m = 0
        while True:
            i = _flat(pos, lo, strides)
            if i == target:
                out[s] = math.exp(-acc)
                break
            acc += theta[i]
            if acc > max_exponent:
                status[s] = 2
                break
            j = _choose(P, i, to_unit(combine(hstep, m)))
            m += 1
            if not _move(pos, j, lo, hi):
                status[s] = 1
                break
    return out, status


@dataclass(frozen=True)
class CrossingEstimate:
    estimate: float
    se: float
    samples: int
    exited: int
    truncated: int

    def __iter__(self):
        return iter((self.estimate, self.se))


def _crossing_chunk(args):
    start, target, geom, P, theta, seed, first, count = args
    lo, hi, strides = geom
    return _crossing_kernel(start, target, lo, hi, strides, P, theta, seed, first, count, MAX_EXPONENT)


def _chunks(samples):
    return [(i, min(CHUNK, samples - i)) for i in range(0, samples, CHUNK)]


def estimate_crossing_mc(env: EnvironmentBox, x, y, lam: float, samples: int, seed: int,
                         workers: int = 1) -> CrossingEstimate:
    """Monte Carlo estimate of ``e_lam(x, y)`` restricted to the box.

    Each sample is a discrete walk from ``x`` scored ``exp(-sum theta)`` over
    the sites left before reaching ``y``. Paths leaving the box score zero,
    as in the box solver; paths whose exponent passes 745 are dropped
    (their score is below the double-precision floor).
    """
    if not lam > 0:
        raise ValueError("lam must be positive for the killed representation to be integrable")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    x = tuple(int(v) for v in x)
    y = tuple(int(v) for v in y)
    if x == y:
        return CrossingEstimate(1.0, 0.0, int(samples), 0, 0)
    start = np.array(x, dtype=np.int64)
    env.offset(x)
    target = env.flat_index(y)
    geom = _geometry(env)
    P = env.probs().reshape(env.size, -1)
    theta = env.theta(lam).ravel()
    tasks = [(start, target, geom, P, theta, int(seed), a, c) for a, c in _chunks(samples)]
    parts = pmap(_crossing_chunk, tasks, workers)
    vals = np.concatenate([p[0] for p in parts])
    status = np.concatenate([p[1] for p in parts])
    se = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return CrossingEstimate(
        float(vals.mean()), se, int(samples), int((status == 1).sum()), int((status == 2).sum())
    )


# --------------------------------------------------------------------------
# tilted hitting times


@nb.njit(cache=True)
def _tilted_kernel(start, target, lo, hi, strides, Q, logratio, theta, lam, tcode, tp1, tp2, exact,
                   seed, first, count, max_steps):
    logw = np.full(count, -np.inf)
    hit = np.zeros(count)
    steps = np.zeros(count, dtype=np.int64)
    for s in range(count):
        sample = first + s
        pos = start.copy()
        hstep = combine(root(seed, STREAM_STEP), sample)
        hhold = combine(root(seed, STREAM_HOLD), sample)
        lw = 0.0
        clock = 0.0
        m = 0
        ok = False
        while m < max_steps:
            i = _flat(pos, lo, strides)
            if i == target:
                ok = True
                break
            tau = draw_holding(tcode[i], tp1[i], tp2[i], combine(hhold, m))
            clock += tau
            lw -= theta[i] if exact[i] else lam * tau
            j = _choose(Q, i, to_unit(combine(hstep, m)))
            lw += logratio[i, j]
            m += 1
            if not _move(pos, j, lo, hi):
                break
        if ok:
            logw[s] = lw
            hit[s] = clock
        steps[s] = m
    return logw, hit, steps


def _tilted_holding(env: EnvironmentBox, lam: float):
    # holding draws from the exp(-lam s)-tilted law where it is in the same family;
    # `exact` marks sites whose weight is exp(-theta), the rest carry exp(-lam tau)
    codes, p1, p2 = _site_laws(env)
    p1, p2 = p1.copy(), p2.copy()
    exact = np.isin(codes, (DETERMINISTIC, EXPONENTIAL, GAMMA))
    e = codes == EXPONENTIAL
    p1[e] = p1[e] + lam
    g = codes == GAMMA
    p2[g] = p2[g] / (1.0 + lam * p2[g])
    return codes, p1, p2, exact


@dataclass
class TiltedSampleSet:
    log_weights: np.ndarray = field(repr=False)  # -inf for paths that never hit
    hitting_times: np.ndarray = field(repr=False)
    steps: np.ndarray = field(repr=False)
    distance: float
    tilt: np.ndarray
    lam: float

    @property
    def weights(self) -> np.ndarray:
        """Self-normalised importance weights (sum to 1)."""
        if not np.isfinite(self.log_weights).any():
            return np.zeros_like(self.log_weights)
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    @property
    def ess(self) -> float:
        w = self.weights
        s2 = float(np.sum(w * w))
        return 1.0 / s2 if s2 > 0 else 0.0

    @property
    def flagged(self) -> bool:
        return self.ess < MIN_ESS

    @property
    def crossing_estimate(self) -> float:
        """Unnormalised weight mean, an unbiased estimate of ``e_lam(x, y)``."""
        n = self.log_weights.size
        return float(np.exp(logsumexp(self.log_weights) - math.log(n)))

    @property
    def scaled_times(self) -> np.ndarray:
        return self.hitting_times / self.distance

    def weighted_mean(self) -> float:
        return float(np.sum(self.weights * self.scaled_times))

    def weighted_quantile(self, q: float) -> float:
        order = np.argsort(self.scaled_times, kind="stable")
        cw = np.cumsum(self.weights[order])
        return float(self.scaled_times[order][min(np.searchsorted(cw, q), cw.size - 1)])


def _tilted_chunk(args):
    (start, target, geom, Q, logratio, theta, lam, hold, seed, first, count, max_steps) = args
    lo, hi, strides = geom
    tcode, tp1, tp2, exact = hold
    return _tilted_kernel(start, target, lo, hi, strides, Q, logratio, theta, lam, tcode, tp1, tp2,
                          exact, seed, first, count, max_steps)


def tilted_hitting_sampler(env: EnvironmentBox, x, y, lam: float, samples: int, seed: int,
                           tilt=None, max_steps: int = 10**6, workers: int = 1) -> TiltedSampleSet:
    """Importance-sample paths under the crossing-tilted measure and record ``H^Z(y)``.

    Jumps are proposed from ``q(z, e) ~ omega(z, e) exp(eta . e)`` with the
    constant tilt ``eta = a (y - x) / |y - x|^2`` and ``a`` the computed
    crossing cost (exact recursion in one dimension, box solver otherwise).
    Holding times come from the ``exp(-lam s)``-tilted law when it stays in
    its family. Each hitting path carries weight ``prod omega / q`` times the
    holding factor, so the self-normalised weights represent the measure
    proportional to ``exp(-lam H^Z) 1{H^Z < inf}``.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    x = tuple(int(v) for v in x)
    y = tuple(int(v) for v in y)
    if x == y:
        raise ValueError("x and y must differ")
    diff = np.subtract(y, x).astype(float)
    if tilt is None:
        if env.dim == 1:
            a = exact_a_1d(env, x[0], y[0], lam)
        else:
            a = solve_crossing(env, x, [y], lam).cost
        tilt = a * diff / float(diff @ diff)
    tilt = np.asarray(tilt, dtype=float).reshape(env.dim)
    dirs = np.zeros((2 * env.dim, env.dim))
    for a_ in range(env.dim):
        dirs[2 * a_, a_], dirs[2 * a_ + 1, a_] = 1.0, -1.0
    P = env.probs().reshape(env.size, -1)
    Q = P * np.exp(dirs @ tilt)[None, :]
    Q /= Q.sum(axis=1, keepdims=True)
    logratio = np.log(P) - np.log(Q)
    start = np.array(x, dtype=np.int64)
    env.offset(x)
    target = env.flat_index(y)
    geom = _geometry(env)
    theta = env.theta(lam).ravel()
    hold = _tilted_holding(env, lam)
    tasks = [(start, target, geom, Q, logratio, theta, float(lam), hold, int(seed), a_, c, int(max_steps))
             for a_, c in _chunks(samples)]
    parts = pmap(_tilted_chunk, tasks, workers)
    return TiltedSampleSet(
        log_weights=np.concatenate([p[0] for p in parts]),
        hitting_times=np.concatenate([p[1] for p in parts]),
        steps=np.concatenate([p[2] for p in parts]),
        distance=float(np.abs(diff).sum()),
        tilt=tilt,
        lam=float(lam),
    )


# --------------------------------------------------------------------------
# empirical large deviations


@nb.njit(cache=True)
def _final_kernel(start, lo, hi, strides, P, codes, p1, p2, size, seed, first, count, horizon, max_jumps):
    d = start.shape[0]
    finals = np.empty((count, d), dtype=np.int64)
    status = np.zeros(count, dtype=np.int64)
    visits = np.zeros(size, dtype=np.int64)
    touched = np.empty(max_jumps + 1, dtype=np.int64)
    for s in range(count):
        sample = first + s
        pos = start.copy()
        hstep = combine(root(seed, STREAM_STEP), sample)
        clock = 0.0
        nt = 0
        n = 0
        while True:
            if n >= max_jumps:
                status[s] = 2
                break
            i = _flat(pos, lo, strides)
            if visits[i] == 0:
                touched[nt] = i
                nt += 1
            tau = draw_holding(codes[i], p1[i], p2[i], _hold_hash(seed, sample, pos, visits[i]))
            visits[i] += 1
            if clock + tau > horizon:
                break
            clock += tau
            j = _choose(P, i, to_unit(combine(hstep, n)))
            n += 1
            if not _move(pos, j, lo, hi):
                status[s] = 1
                break
        finals[s] = pos
        for k in range(nt):
            visits[touched[k]] = 0
    return finals, status


def _final_chunk(args):
    start, geom, P, laws, size, seed, first, count, horizon, max_jumps = args
    lo, hi, strides = geom
    codes, p1, p2 = laws
    return _final_kernel(start, lo, hi, strides, P, codes, p1, p2, size, seed, first, count, horizon, max_jumps)


@dataclass(frozen=True)
class LdpRow:
    speed: float
    empirical: float  # -log(P_hat) / t, or the lower bound log(samples) / t when no sample hit
    theoretical: float
    samples: int
    hits: int
    flag: str  # "" | "lower_bound" | "impossible" | "exited"


def _max_jumps_bound(spec: EnvironmentSpec, t: float):
    # holding times bounded below only for all-deterministic catalogues
    if all(isinstance(law, Deterministic) for law in spec.laws):
        return int(math.floor(t / min(law.c for law in spec.laws) + 1e-12))
    return None


def srw_tail_probability(t: int, threshold: float) -> float:
    """``P(S_t >= threshold)`` for the simple symmetric walk on Z after ``t`` steps."""
    k0 = max(0, math.ceil((t + threshold) / 2 - 1e-12))
    if k0 > t:
        return 0.0
    k = np.arange(k0, t + 1)
    logs = gammaln(t + 1) - gammaln(k + 1) - gammaln(t - k + 1) - t * math.log(2.0)
    return float(np.exp(logsumexp(logs)))


def empirical_ldp_curve(
    spec: EnvironmentSpec,
    speeds: Sequence[float],
    t: float,
    samples: int,
    seed: int,
    direction=None,
    rate=None,
    radius: int | None = None,
    workers: int = 1,
) -> list[LdpRow]:
    """Naive estimates of ``-(1/t) log P(Z_t . u >= v t)`` on one realisation.

    ``u`` is the unit vector along ``direction`` (default the first axis).
    ``rate`` is an optional callable ``v -> I(v u)`` for the side-by-side
    column. The walk lives in a cube of half-width ``radius`` (default three
    times the typical jump count plus 10); exits are flagged.
    """
    d = spec.dim
    u = np.zeros(d)
    u[0] = 1.0
    if direction is not None:
        u = np.asarray(direction, dtype=float).reshape(d)
        u = u / np.linalg.norm(u)
    bound = _max_jumps_bound(spec, t)
    if radius is None:
        radius = bound + 1 if bound is not None else int(3 * t / spec.mean_holding()) + 10
    env = sample_environment(spec, ([-radius] * d, [radius] * d), seed)
    max_jumps = bound + 1 if bound is not None else int(20 * t / spec.mean_holding()) + 1000
    geom = _geometry(env)
    P = env.probs().reshape(env.size, -1)
    laws = _site_laws(env)
    start = np.zeros(d, dtype=np.int64)
    tasks = [(start, geom, P, laws, env.size, int(seed), a, c, float(t), max_jumps) for a, c in _chunks(samples)]
    parts = pmap(_final_chunk, tasks, workers)
    finals = np.concatenate([p[0] for p in parts])
    status = np.concatenate([p[1] for p in parts])
    proj = finals @ u
    rows = []
    for v in speeds:
        v = float(v)
        hits = int(np.count_nonzero(proj >= v * t - 1e-9))
        theo = float(rate(v)) if rate is not None else math.nan
        if bound is not None and v * t > bound * float(np.max(np.abs(u))) + 1e-9:
            rows.append(LdpRow(v, math.inf, theo, samples, 0, "impossible"))
        elif hits == 0:
            rows.append(LdpRow(v, math.log(samples) / t, theo, samples, 0, "lower_bound"))
        else:
            flag = "exited" if status.any() else ""
            rows.append(LdpRow(v, -math.log(hits / samples) / t, theo, samples, hits, flag))
    return rows
