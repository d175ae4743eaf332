"""Site-weighted first-passage percolation.

A path ``r_0, ..., r_n`` costs ``sum_{i<n} xi(r_i)``: each site is charged on
departure and the endpoint is free. Passage times are shortest paths for
that cost, found by Dijkstra's algorithm on the box graph.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np

from . import _hashing
from ._sampling import draw_holding, law_table
from .crossing import _neighbour_table
from .lyapunov import estimate_alpha
from .parallel import pmap
from .scenery import EnvironmentSpec, common_scale, sample_environment

__all__ = [
    "WeightField",
    "PassageTimeResult",
    "BruteForceResult",
    "TimeConstantEstimate",
    "ScalingRow",
    "passage_time",
    "passage_times_from",
    "passage_time_bruteforce",
    "estimate_time_constant",
    "lyapunov_fpp_scaling",
]

WEIGHT_KINDS = ("theta", "mean", "sample")


@dataclass(eq=False)
class WeightField:
    """Positive site weights on the box ``prod_i [lo_i, hi_i]``."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]
    weights: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self):
        self.lo = tuple(int(v) for v in self.lo)
        self.hi = tuple(int(v) for v in self.hi)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != self.shape:
            raise ValueError(f"weights shape {self.weights.shape} != box shape {self.shape}")
        if not np.all(self.weights > 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite and strictly positive")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    def flat(self, site) -> int:
        off = tuple(int(s) - a for s, a in zip(site, self.lo))
        if len(off) != self.dim or any(o < 0 or o >= n for o, n in zip(off, self.shape)):
            raise ValueError(f"site {tuple(site)} outside box {self.lo}..{self.hi}")
        return int(np.ravel_multi_index(off, self.shape))

    def site(self, i: int) -> tuple[int, ...]:
        return tuple(int(o) + a for o, a in zip(np.unravel_index(i, self.shape), self.lo))

    def path_cost(self, path) -> float:
        return float(sum(self.weights[tuple(s - a for s, a in zip(p, self.lo))] for p in path[:-1]))

    def on_boundary(self, site) -> bool:
        return any(s == a or s == b for s, a, b in zip(site, self.lo, self.hi))

    @classmethod
    def constant(cls, lo, hi, c: float) -> "WeightField":
        shape = tuple(b - a + 1 for a, b in zip(lo, hi))
        return cls(lo, hi, np.full(shape, float(c)))

    @classmethod
    def from_spec(cls, spec: EnvironmentSpec, box, seed: int, kind: str = "theta") -> "WeightField":
        """Weights from the site holding laws of a sampled environment.

        ``kind`` is ``"theta"`` (the law's large-``lam`` constant Theta),
        ``"mean"`` (the law's mean) or ``"sample"`` (one holding-time draw per
        site).
        """
        env = sample_environment(spec, box, seed)
        if kind == "theta":
            _, thetas = common_scale(spec)
            w = np.asarray(thetas)[env.law_index]
        elif kind == "mean":
            w = np.array([law.mean() for law in spec.laws])[env.law_index]
        elif kind == "sample":
            codes, p1, p2 = law_table(spec.laws)
            w = _draw_sites(env.coords(), env.law_index.ravel(), codes, p1, p2, int(seed))
            w = w.reshape(env.shape)
        else:
            raise ValueError(f"unknown weight kind {kind!r}; expected one of {WEIGHT_KINDS}")
        return cls(env.lo, env.hi, w, int(seed))


@nb.njit(cache=True)
def _draw_sites(coords, law_index, codes, p1, p2, seed):
    n, d = coords.shape
    out = np.empty(n)
    base = _hashing.root(seed, _hashing.STREAM_WEIGHT)
    for i in range(n):
        h = base
        for j in range(d):
            h = _hashing.combine(h, coords[i, j])
        k = law_index[i]
        out[i] = draw_holding(codes[k], p1[k], p2[k], h)
    return out


@nb.njit(cache=True)
def _dijkstra(w, nbr, src, dst):
    # dst < 0 runs to exhaustion; returns (dist, pred, expanded)
    n = w.shape[0]
    dist = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)
    dist[src] = 0.0
    heap = [(0.0, src)]
    expanded = 0
    while len(heap) > 0:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        expanded += 1
        if u == dst:
            break
        nd = d + w[u]
        for j in range(nbr.shape[1]):
            v = nbr[u, j]
            if v >= 0 and not done[v] and nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, pred, expanded


def _trace(pred, src, dst):
    path = [dst]
    while path[-1] != src:
        path.append(int(pred[path[-1]]))
    return path[::-1]


@dataclass
class PassageTimeResult:
    source: tuple[int, ...]
    target: tuple[int, ...]
    value: float
    path: list
    expanded: int


def passage_time(fld: WeightField, x, y) -> PassageTimeResult:
    """Minimal departure-charged cost of a nearest-neighbour path ``x -> y`` in the box."""
    x = tuple(int(v) for v in x)
    y = tuple(int(v) for v in y)
    s, t = fld.flat(x), fld.flat(y)
    if s == t:
        return PassageTimeResult(x, y, 0.0, [x], 0)
    nbr = _neighbour_table(fld.shape)
    dist, pred, expanded = _dijkstra(fld.weights.ravel(), nbr, s, t)
    path = [fld.site(i) for i in _trace(pred, s, t)]
    return PassageTimeResult(x, y, float(dist[t]), path, int(expanded))


def passage_times_from(fld: WeightField, x):
    """All passage times from ``x`` as a box-shaped array, plus the predecessor table."""
    s = fld.flat(x)
    nbr = _neighbour_table(fld.shape)
    dist, pred, _ = _dijkstra(fld.weights.ravel(), nbr, s, -1)
    return dist.reshape(fld.shape), pred


@dataclass(frozen=True)
class BruteForceResult:
    value: float
    exhaustive: bool  # False when the length cap cut off a branch that could still improve


def passage_time_bruteforce(fld: WeightField, x, y, max_len: int | None = None) -> BruteForceResult:
    """Depth-first search over simple paths with cost pruning.

    With ``max_len`` at least the number of box sites the search is
    exhaustive; otherwise branches longer than ``max_len`` steps are dropped
    and the result is marked non-exhaustive if any were.
    """
    s, t = fld.flat(x), fld.flat(y)
    if s == t:
        return BruteForceResult(0.0, True)
    nbr = _neighbour_table(fld.shape)
    w = fld.weights.ravel()
    cap = w.size if max_len is None else int(max_len)
    best = math.inf
    truncated = False
    visited = np.zeros(w.size, dtype=bool)
    visited[s] = True
    # explicit stack of (site, cost so far, steps, next neighbour slot)
    stack = [[s, 0.0, 0, 0]]
    while stack:
        top = stack[-1]
        u, cost, steps, j = top
        if j >= nbr.shape[1]:
            visited[u] = False
            stack.pop()
            continue
        top[3] = j + 1
        v = nbr[u, j]
        if v < 0 or visited[v]:
            continue
        nc = cost + w[u]
        if nc >= best:
            continue
        if v == t:
            best = nc
            continue
        if steps + 1 >= cap:
            truncated = True
            continue
        visited[v] = True
        stack.append([v, nc, steps + 1, 0])
    return BruteForceResult(float(best), not truncated)


# --------------------------------------------------------------------------
# time constant


@dataclass
class TimeConstantEstimate:
    direction: tuple[int, ...]
    schedule: tuple[int, ...]
    values: np.ndarray = field(repr=False)  # (len(schedule), replicas) of T(0, n x) / n
    touched: np.ndarray = field(repr=False)  # geodesic met the box boundary
    means: np.ndarray = field(repr=False)
    spreads: np.ndarray = field(repr=False)
    point: float
    spread: float
    straight: np.ndarray = field(repr=False)  # straight-line costs / n on the same fields

    @property
    def flagged(self) -> bool:
        return bool(self.touched.any())

    def rows(self):
        for i, n in enumerate(self.schedule):
            for r in range(self.values.shape[1]):
                yield n, r, float(self.values[i, r]), bool(self.touched[i, r])


def _straight_cost(fld, x, n):
    # lexicographic staircase 0 -> n x: all steps along axis 0, then axis 1, ...
    site = [0] * fld.dim
    path = [tuple(site)]
    for a, v in enumerate(x):
        step = 1 if v > 0 else -1
        for _ in range(abs(v) * n):
            site[a] += step
            path.append(tuple(site))
    return fld.path_cost(path)


def _time_constant_task(args):
    spec, x, schedule, margin, seed, kind = args
    far = [max(schedule) * v for v in x]
    lo = [min(0, f) - margin for f in far]
    hi = [max(0, f) + margin for f in far]
    if spec.dim == 1:
        lo, hi = [min(0, far[0])], [max(0, far[0])]
    fld = WeightField.from_spec(spec, (lo, hi), seed, kind)
    dist, pred = passage_times_from(fld, (0,) * spec.dim)
    s = fld.flat((0,) * spec.dim)
    vals, touched, straight = [], [], []
    for n in schedule:
        y = tuple(n * v for v in x)
        t = fld.flat(y)
        path = _trace(pred, s, t)
        vals.append(float(dist.ravel()[t]) / n)
        touched.append(spec.dim > 1 and any(fld.on_boundary(fld.site(i)) for i in path))
        straight.append(_straight_cost(fld, x, n) / n)
    return vals, touched, straight


def estimate_time_constant(
    spec: EnvironmentSpec,
    x,
    schedule: Sequence[int] = (10, 20, 40, 80),
    replicas: int = 16,
    seed: int = 0,
    margin: int | None = None,
    weights: str = "theta",
    workers: int = 1,
) -> TimeConstantEstimate:
    """Estimate ``nu(x) = lim T(0, n x) / n`` from replica fields.

    One shortest-path tree per replica serves every ``n``. The box spans
    ``0`` and ``n_max x`` padded by ``margin`` sites (default half the l1
    length, at least 5); in one dimension geodesics are straight and no
    padding is used. Replicas whose geodesic touches the boundary are flagged.
    """
    x = tuple(int(v) for v in np.ravel(x))
    if not any(x):
        raise ValueError("x must be nonzero")
    if len(x) != spec.dim:
        raise ValueError(f"x has {len(x)} coordinates, spec has dim {spec.dim}")
    schedule = tuple(int(n) for n in schedule)
    if margin is None:
        margin = max(5, (max(schedule) * sum(abs(v) for v in x)) // 2)
    seeds = [_hashing.derive_seed(seed, r) for r in range(replicas)]
    out = pmap(_time_constant_task, [(spec, x, schedule, margin, s, weights) for s in seeds], workers)
    vals = np.array([o[0] for o in out]).T
    touched = np.array([o[1] for o in out]).T
    straight = np.array([o[2] for o in out]).T
    means = vals.mean(axis=1)
    spreads = vals.std(axis=1, ddof=1) if replicas > 1 else np.zeros(len(schedule))
    return TimeConstantEstimate(
        direction=x,
        schedule=schedule,
        values=vals,
        touched=touched,
        means=means,
        spreads=spreads,
        point=float(means[-1]),
        spread=float(spreads[-1]),
        straight=straight,
    )


@dataclass(frozen=True)
class ScalingRow:
    lam: float
    alpha: float
    scale: float
    ratio: float
    nu: float
    flagged: bool


def lyapunov_fpp_scaling(
    spec: EnvironmentSpec,
    x,
    lams: Sequence[float],
    tol: float = 1e-6,
    schedule: Sequence[int] = (40,),
    replicas: int = 16,
    seed: int = 0,
    nu_schedule: Sequence[int] = (10, 20, 40, 80),
    workers: int = 1,
) -> list[ScalingRow]:
    """Tabulate ``alpha_lam(x) / L(lam)`` against the Theta-weighted time constant.

    ``L`` and the site weights ``Theta`` come from the spec's common Tauberian
    scale. The time constant uses independent replicas of the same seed tree.
    """
    scale, _ = common_scale(spec)
    Xint = tuple(int(v) for v in np.ravel(x))
    nu = estimate_time_constant(spec, Xint, nu_schedule, replicas, seed, weights="theta", workers=workers)
    rows = []
    for lam in lams:
        est = estimate_alpha(spec, Xint, lam, schedule, replicas, seed, tol, workers)
        L = float(scale(lam))
        rows.append(ScalingRow(float(lam), est.point, L, est.point / L, nu.point, est.flagged or nu.flagged))
    return rows
