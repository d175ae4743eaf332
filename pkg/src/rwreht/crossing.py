"""Crossing functionals on finite boxes.

``e_lam(x, y)`` is the expected value of ``exp(-lam * H)`` for the first
passage time ``H`` of the continuous-time walk through ``y``. Averaging out
the holding times leaves a discrete walk killed at rate ``theta_lam(z)`` per
visit, so on a box the field ``u(z) = e_lam(z, target)`` solves

    u = 1 on the target,  u = 0 outside the box,
    u(z) = exp(-theta(z)) * sum_e omega(z, e) u(z + e)  elsewhere.

The system is solved by Gauss-Seidel substitution started from ``u = 0``.
The iteration is monotone, so every iterate bounds the box solution from
below, and the box solution bounds the infinite-lattice value from below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .scenery import EnvironmentBox, EnvironmentSpec, box_around, directions, sample_environment

__all__ = [
    "CrossingSolution",
    "CrossingCost",
    "solve_crossing",
    "crossing_cost",
    "adaptive_box",
    "halfspace_target",
]

DEFAULT_TOL = 1e-9
MAX_SWEEPS = 10**6
BOX_INCREMENT = 10


@dataclass
class CrossingSolution:
    values: np.ndarray = field(repr=False)
    target: np.ndarray = field(repr=False)
    lam: float
    lo: tuple[int, ...]
    hi: tuple[int, ...]
    start: tuple[int, ...]
    iterations: int
    residual: float
    converged: bool
    rate: float = float("nan")
    box_history: list = field(default_factory=list)
    box_converged: bool | None = None

    @property
    def value(self) -> float:
        """``u(start)``, a lower bound on the infinite-lattice crossing functional."""
        off = tuple(s - a for s, a in zip(self.start, self.lo))
        return float(self.values[off])

    @property
    def cost(self) -> float:
        v = self.value
        return -math.log(v) if v > 0 else math.inf

    def at(self, site) -> float:
        return float(self.values[tuple(s - a for s, a in zip(site, self.lo))])

    @property
    def flags(self) -> dict:
        out = {"converged": self.converged}
        if self.box_converged is not None:
            out["box_converged"] = self.box_converged
        return out


@dataclass(frozen=True)
class CrossingCost:
    a: float
    d: float
    converged: bool


# --------------------------------------------------------------------------
# compiled sweep


@nb.njit(cache=True)
def _sweep(u, nbr, P, z, is_target, forward):
    n, k = nbr.shape
    delta = 0.0
    for step in range(n):
        i = step if forward else n - 1 - step
        if is_target[i]:
            u[i] = 1.0
            continue
        acc = 0.0
        for j in range(k):
            m = nbr[i, j]
            if m >= 0:
                acc += P[i, j] * u[m]
        new = z[i] * acc
        old = u[i]
        u[i] = new
        if new > 1e-290:
            rel = (new - old) / new
            if rel > delta:
                delta = rel
    return delta


@nb.njit(cache=True)
def _iterate(u, nbr, P, z, is_target, tol, max_sweeps):
    # one iteration = forward + reverse sweep; returns (sweeps, bound, rho)
    prev = -1.0
    sweeps = 0
    bound = np.inf
    rho = 1.0
    while sweeps < max_sweeps:
        d1 = _sweep(u, nbr, P, z, is_target, True)
        d2 = _sweep(u, nbr, P, z, is_target, False)
        sweeps += 2
        delta = max(d1, d2)
        if delta == 0.0:
            return sweeps, 0.0, 0.0
        if prev > 0.0:
            rho = delta / prev
            if rho < 1.0:
                bound = delta * rho / (1.0 - rho)
                if bound <= tol:
                    return sweeps, bound, rho
        prev = delta
    return sweeps, bound, rho


def _neighbour_table(shape):
    d = len(shape)
    n = int(np.prod(shape))
    flat = np.arange(n).reshape(shape)
    nbr = np.full((n, 2 * d), -1, dtype=np.int64)
    for j, e in enumerate(directions(d)):
        src = [slice(None)] * d
        dst = [slice(None)] * d
        axis = int(np.nonzero(e)[0][0])
        if e[axis] > 0:
            src[axis] = slice(0, shape[axis] - 1)
            dst[axis] = slice(1, None)
        else:
            src[axis] = slice(1, None)
            dst[axis] = slice(0, shape[axis] - 1)
        col = np.full(shape, -1, dtype=np.int64)
        col[tuple(src)] = flat[tuple(dst)]
        nbr[:, j] = col.ravel()
    return nbr


def _target_mask(env: EnvironmentBox, target) -> np.ndarray:
    if isinstance(target, np.ndarray) and target.dtype == bool:
        if target.shape != env.shape:
            raise ValueError("boolean target mask must have the box shape")
        return target.copy()
    pts = np.atleast_2d(np.asarray(target, dtype=np.int64))
    if pts.shape[1] != env.dim:
        pts = pts.reshape(-1, env.dim)
    mask = np.zeros(env.shape, dtype=bool)
    for p in pts:
        mask[env.offset(tuple(p))] = True
    return mask


def halfspace_target(env: EnvironmentBox, axis: int, level: int) -> np.ndarray:
    """Boolean mask of box sites with coordinate ``axis`` at least ``level``."""
    coord = np.arange(env.lo[axis], env.hi[axis] + 1)
    shape = [1] * env.dim
    shape[axis] = -1
    return np.broadcast_to(coord.reshape(shape) >= level, env.shape).copy()


def solve_crossing(
    env: EnvironmentBox,
    start,
    target,
    lam: float,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = MAX_SWEEPS,
    initial: np.ndarray | None = None,
) -> CrossingSolution:
    """Solve the killed-walk boundary problem toward ``target`` on ``env``'s box.

    ``target`` is a site, a list of sites, or a boolean mask of box shape.
    ``tol`` bounds the relative error of every field value (so roughly the
    absolute error of ``-log u``), estimated from the observed contraction
    rate. ``initial`` may supply a sub-solution (e.g. a solution on a smaller
    box, zero-padded) to start from; the lower-bound property is preserved.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    start = tuple(int(s) for s in start)
    env.offset(start)
    mask = _target_mask(env, target)
    if not mask.any():
        raise ValueError("target set does not meet the box")
    nbr = _neighbour_table(env.shape)
    P = env.probs().reshape(env.size, -1)
    z = np.exp(-env.theta(lam)).ravel()
    if initial is None:
        u = np.zeros(env.size)
    else:
        u = np.array(initial, dtype=float).reshape(env.size)
    u[mask.ravel()] = 1.0
    sweeps, bound, rho = _iterate(u, nbr, P, z, mask.ravel(), float(tol), int(max_sweeps))
    converged = bool(bound <= tol)
    return CrossingSolution(
        values=u.reshape(env.shape),
        target=mask,
        lam=float(lam),
        lo=env.lo,
        hi=env.hi,
        start=start,
        iterations=int(sweeps),
        residual=float(bound),
        converged=converged,
        rate=float(rho),
    )


def crossing_cost(env: EnvironmentBox, x, y, lam: float, tol: float = DEFAULT_TOL) -> CrossingCost:
    """``a_lam(x, y)`` and the symmetrised ``d_lam = max(a(x, y), a(y, x))``."""
    x = tuple(int(v) for v in x)
    y = tuple(int(v) for v in y)
    if x == y:
        return CrossingCost(0.0, 0.0, True)
    fwd = solve_crossing(env, x, [y], lam, tol)
    bwd = solve_crossing(env, y, [x], lam, tol)
    return CrossingCost(fwd.cost, max(fwd.cost, bwd.cost), fwd.converged and bwd.converged)


def _embed(sol: CrossingSolution, env: EnvironmentBox) -> np.ndarray:
    out = np.zeros(env.shape)
    idx = tuple(
        slice(a - b, a - b + n) for a, b, n in zip(sol.lo, env.lo, sol.values.shape)
    )
    out[idx] = sol.values
    return out


def adaptive_box(
    spec: EnvironmentSpec,
    x,
    y,
    lam: float,
    tol: float = 1e-6,
    seed: int = 0,
    increment: int = BOX_INCREMENT,
    max_growths: int = 30,
    solver_tol: float | None = None,
    target=None,
) -> CrossingSolution:
    """Grow the box around ``x`` and ``y`` until ``a`` stabilises to ``tol``.

    Each growth adds ``increment`` sites to every face and re-solves on the
    same seeded realisation, warm-started from the previous (zero-padded)
    solution. If the cap is hit the last solution is returned with
    ``box_converged=False``; it still bounds ``e`` from below. ``target``
    overrides the point target ``y`` with a callable ``env -> mask``.
    """
    x = tuple(int(v) for v in x)
    y = tuple(int(v) for v in y)
    solver_tol = solver_tol if solver_tol is not None else min(DEFAULT_TOL, tol * 1e-2)
    lo, hi = box_around([x, y], increment)
    history = []
    prev = None
    sol = None
    for _ in range(max_growths + 1):
        env = sample_environment(spec, (lo, hi), seed)
        tgt = [y] if target is None else target(env)
        init = _embed(sol, env) if sol is not None else None
        sol = solve_crossing(env, x, tgt, lam, solver_tol, initial=init)
        history.append((env.lo, env.hi, sol.cost))
        if prev is not None and abs(sol.cost - prev) <= tol and sol.converged:
            sol.box_history = history
            sol.box_converged = True
            return sol
        prev = sol.cost
        lo = tuple(a - increment for a in lo)
        hi = tuple(b + increment for b in hi)
    sol.box_history = history
    sol.box_converged = False
    return sol
