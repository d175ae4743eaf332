"""Exact one-dimensional crossing costs.

In one dimension the walk must pass every intermediate site, so the cost of
crossing from ``x`` to ``y`` is the sum of unit-step costs. The unit step
``f(k) = e_lam(k, k + 1)`` obeys

    f(k) = exp(-theta(k)) p(k) / (1 - exp(-theta(k)) q(k) f(k - 1)),

started from ``f(cut - 1) = 0`` (the walk is killed left of the cut). The
recursion forgets the cut geometrically for ``lam > 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .scenery import EnvironmentBox

__all__ = ["StepCrossing", "step_crossings", "exact_a_1d", "exact_a_1d_flagged", "CutNotConverged"]

CUT_TOL = 1e-10
CUT_MARGIN = 50
MAX_CUT_DEPTH = 1 << 20


class CutNotConverged(RuntimeError):
    """Deepening the left cut did not stabilise the cost (lam = 0, recurrent)."""


@dataclass
class StepCrossing:
    lo: int
    f: np.ndarray
    left_cut: int

    def at(self, k: int) -> float:
        return float(self.f[k - self.lo])

    def cost(self, k: int) -> float:
        return -math.log(self.at(k))


@nb.njit(cache=True)
def _log_recursion(theta, p, q):
    # same recursion for -log f, stable when exp(-theta) underflows
    n = theta.shape[0]
    out = np.empty(n)
    prev = math.inf
    for k in range(n):
        t = -theta[k] + math.log(q[k]) - prev
        out[k] = theta[k] - math.log(p[k]) + math.log1p(-math.exp(t))
        prev = out[k]
    return out


def step_crossings(env: EnvironmentBox, lam: float, left_cut: int | None = None) -> StepCrossing:
    """Unit-step crossing values ``f(k) = e_lam(k, k+1)`` for every box site.

    The walk is killed on leaving ``[left_cut, ...]``; the default cut is the
    box's left edge.
    """
    if env.dim != 1:
        raise ValueError("step_crossings needs a one-dimensional environment")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    cut = env.lo[0] if left_cut is None else int(left_cut)
    if cut < env.lo[0]:
        env = env.extended((cut,), env.hi)
    probs = env.probs()
    i0 = cut - env.lo[0]
    theta = env.theta(lam)[i0:]
    p = probs[i0:, 0]
    q = probs[i0:, 1]
    f = np.exp(-_log_recursion(theta, p, q))
    return StepCrossing(lo=cut, f=f, left_cut=cut)


def _unit_costs(env: EnvironmentBox, lam: float, cut: int, x: int, y: int) -> np.ndarray:
    # unit-step costs along x -> y, walk killed beyond `cut` (behind x)
    lo, hi = (cut, y) if x < y else (y, cut)
    if lo < env.lo[0] or hi > env.hi[0]:
        env = env.extended((min(lo, env.lo[0]),), (max(hi, env.hi[0]),))
    probs = env.probs()
    theta = env.theta(lam)
    if x < y:
        sl = slice(cut - env.lo[0], y - env.lo[0])
        costs = _log_recursion(theta[sl], probs[sl, 0], probs[sl, 1])
        return costs[x - cut:]
    # leftward crossing: traverse cut, cut-1, ..., y+1 with roles of p, q swapped
    sl = slice(cut - env.lo[0], y - env.lo[0], -1)
    costs = _log_recursion(theta[sl], probs[sl, 1], probs[sl, 0])
    return costs[cut - x:]


def exact_a_1d(
    env: EnvironmentBox,
    x: int,
    y: int,
    lam: float,
    tol: float = CUT_TOL,
    left_cut: int | None = None,
) -> float:
    """``a_lam(x, y)`` on the full line (or with a fixed cut behind ``x``).

    ``left_cut`` is the last live site behind ``x`` (left of ``x`` when
    ``x < y``, right of it otherwise). Without it the cut is pushed back,
    doubling the depth from 50 sites, until deepening by another 50 sites
    moves the result by less than ``tol``; CutNotConverged is raised if that
    never happens. The environment is regenerated from its seed as the cut
    moves.
    """
    a, ok, depth = exact_a_1d_flagged(env, x, y, lam, tol, left_cut)
    if not ok:
        raise CutNotConverged(f"cut depth {depth} does not stabilise a_lam({x},{y})")
    return a


def exact_a_1d_flagged(env, x, y, lam, tol=CUT_TOL, left_cut=None):
    """Like exact_a_1d but returns ``(a, cut_converged, depth)`` instead of raising."""
    if env.dim != 1:
        raise ValueError("exact_a_1d needs a one-dimensional environment")
    x, y = int(np.ravel(x)[0]), int(np.ravel(y)[0])
    if x == y:
        return 0.0, True, 0
    if left_cut is not None:
        return float(np.sum(_unit_costs(env, lam, int(left_cut), x, y))), True, abs(x - left_cut)
    behind = -1 if x < y else 1
    depth = CUT_MARGIN
    while True:
        a = float(np.sum(_unit_costs(env, lam, x + behind * depth, x, y)))
        b = float(np.sum(_unit_costs(env, lam, x + behind * (depth + CUT_MARGIN), x, y)))
        if abs(a - b) < tol:
            return b, True, depth
        depth *= 2
        if depth > MAX_CUT_DEPTH:
            return b, False, depth
