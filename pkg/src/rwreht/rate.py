"""Rate function ``I(x) = sup_{lam >= 0} (alpha_lam(x) - lam)``.

``lam -> alpha_lam(x) - lam`` is concave, so the supremum is located by a
log-spaced scan followed by golden-section refinement inside the bracketing
cell. A supremum still increasing at ``lam_max`` is reported as not attained
rather than truncated silently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .crossing import MAX_SWEEPS, _iterate, _neighbour_table, halfspace_target
from .lyapunov import estimate_alpha, sandwich_bounds
from .parallel import pmap
from .scenery import (
    EnvironmentSpec,
    directions,
    TauberianScale,
    sample_environment,
    tauberian_scale,
)

__all__ = [
    "NonConcaveError",
    "LegendreResult",
    "RatePoint",
    "RateFunctionCurve",
    "AsymptoteReport",
    "OracleAlpha",
    "SolverAlpha",
    "legendre_sup",
    "rate_function",
    "rate_curve",
    "small_x_asymptote",
    "large_x_asymptote",
]

LAM_MAX = 1e3
LAM_MIN = 1e-8
PLATEAU_TOL = 1e-9
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class NonConcaveError(ValueError):
    """Sampled objective violates concavity beyond the noise tolerance."""


@dataclass(frozen=True)
class LegendreResult:
    value: float
    argmax: float
    attained: bool

    def __iter__(self):
        return iter((self.value, self.argmax, self.attained))


def _golden(g, a, b, tol):
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    gc, gd = g(c), g(d)
    while b - a > tol * (1.0 + abs(c)):
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - _INVPHI * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + _INVPHI * (b - a)
            gd = g(d)
    return (c, gc) if gc >= gd else (d, gd)


def legendre_sup(
    g: Callable[[float], float],
    lam_max: float = LAM_MAX,
    tol: float = 1e-10,
    noise: float = 0.0,
    grid_points: int = 48,
) -> LegendreResult:
    """Maximise a concave ``g`` over ``[0, lam_max]``.

    ``noise`` widens the concavity check (absolute, in objective units).
    The least maximiser is reported when ``g`` is flat to ``1e-9`` at the top.
    """
    cache = {}

    def G(lam):
        lam = float(lam)
        if lam not in cache:
            v = float(g(lam))
            cache[lam] = v if not math.isnan(v) else -math.inf
        return cache[lam]

    lams = np.concatenate([[0.0], np.geomspace(min(LAM_MIN, lam_max / 10), lam_max, grid_points)])
    vals = np.array([G(l) for l in lams])
    fin = np.isfinite(vals)
    if not fin.any():
        raise ValueError("objective is -inf on the whole grid")
    _check_concave(lams[fin], vals[fin], noise)
    i = int(np.nanargmax(np.where(fin, vals, -np.inf)))
    # still rising (or flat to rounding) at the cap: the supremum may sit beyond it
    slack = noise + 1e-12 * max(1.0, abs(float(vals[i])))
    if vals[-1] >= vals[i] - slack and vals[-1] >= vals[-2] - slack:
        return LegendreResult(float(vals[-1]), float(lam_max), False)
    lo = lams[max(i - 1, 0)]
    hi = lams[min(i + 1, len(lams) - 1)]
    if i == 0:
        # maximiser in [0, lams[1]]; include the endpoint explicitly
        x, v = _golden(G, lo, hi, tol)
        if vals[0] >= v:
            x, v = 0.0, float(vals[0])
    else:
        x, v = _golden(G, lo, hi, tol)
        if vals[i] > v:
            x, v = float(lams[i]), float(vals[i])
    x = _least_maximiser(G, x, v, tol)
    return LegendreResult(float(max(v, G(x))) + 0.0, float(x), True)


def _least_maximiser(G, x, v, tol):
    if x == 0.0:
        return x
    probe = x - max(1e-6, 1e-3 * x)
    if probe > 0 and G(probe) < v - PLATEAU_TOL:
        return x
    if G(0.0) >= v - PLATEAU_TOL:
        return 0.0
    a, b = 0.0, x
    while b - a > tol * (1.0 + b):
        m = 0.5 * (a + b)
        if G(m) >= v - PLATEAU_TOL:
            b = m
        else:
            a = m
    return b


def _check_concave(lams, vals, noise):
    if len(lams) < 3:
        return
    l0, l1, l2 = lams[:-2], lams[1:-1], lams[2:]
    w = (l1 - l0) / (l2 - l0)
    chord = (1 - w) * vals[:-2] + w * vals[2:]
    slack = noise + 1e-9 * np.maximum(1.0, np.abs(chord))
    bad = np.nonzero(vals[1:-1] < chord - slack)[0]
    if bad.size:
        j = int(bad[0]) + 1
        raise NonConcaveError(
            f"objective not concave near lam={lams[j]:.6g}: "
            f"value {vals[j]:.12g} below chord {chord[j - 1]:.12g}"
        )


# --------------------------------------------------------------------------
# alpha sources


@dataclass
class OracleAlpha:
    """``alpha_lam`` along a rational direction from replica crossing costs.

    One dimension uses the exact recursion, higher dimensions the solver.
    Returns ``(estimate, standard error)``. Replicas share realisations across
    ``lam``, so the sampled objective stays concave.
    """

    spec: EnvironmentSpec
    direction: tuple = (1,)
    n: int = 1000
    replicas: int = 1
    seed: int = 0
    name: str = "oracle"

    def __call__(self, lam):
        est = estimate_alpha(self.spec, self.direction, lam, (self.n,), self.replicas, self.seed)
        return est.point, est.se


@dataclass
class SolverAlpha:
    """``alpha_lam(e_axis)`` from the box solver with a half-space target.

    The walk starts at the origin of the box
    ``[-back, n] x [-width, width]^(d-1)`` (axis first) and is stopped on
    reaching ``{z_axis >= n}``; the exponent is ``-log u(0) / n``. For
    environments symmetric under reflections orthogonal to the axis this
    converges to the exponent along the axis.
    """

    spec: EnvironmentSpec
    axis: int = 0
    n: int = 10
    back: int = 80
    width: int = 80
    seed: int = 0
    tol: float = 1e-10
    name: str = "solver"
    _env: object = field(default=None, repr=False)

    def environment(self):
        if self._env is None:
            d = self.spec.dim
            lo = [-self.width] * d
            hi = [self.width] * d
            lo[self.axis] = -self.back
            hi[self.axis] = self.n
            self._env = sample_environment(self.spec, (lo, hi), self.seed)
        return self._env

    def __call__(self, lam):
        # solve for w = u exp(kappa (n - z_axis)) so that u may underflow while w does not
        env = self.environment()
        mask = halfspace_target(env, self.axis, self.n)
        kappa = sandwich_bounds(self.spec, lam).c1
        e_axis = directions(self.spec.dim)[:, self.axis]
        theta = env.theta(lam).ravel()
        C = np.exp(np.log(env.probs().reshape(env.size, -1)) + kappa * e_axis[None, :] - theta[:, None])
        w = np.zeros(env.size)
        w[mask.ravel()] = 1.0
        _iterate(w, _neighbour_table(env.shape), C, np.ones(env.size), mask.ravel(), self.tol, MAX_SWEEPS)
        w0 = w[env.flat_index((0,) * self.spec.dim)]
        return kappa - math.log(w0) / self.n, 0.0


def _split(v):
    if isinstance(v, tuple):
        return float(v[0]), float(v[1])
    return float(v), 0.0


@dataclass
class RatePoint:
    speed: float
    value: float
    lam_star: float
    attained: bool
    se: float = 0.0

    @property
    def interval(self):
        return (self.value - 3 * self.se, self.value + 3 * self.se)


def rate_function(alpha, speed: float, lam_max: float = LAM_MAX, tol: float = 1e-10) -> RatePoint:
    """``I(speed * x)`` for the direction ``x`` that ``alpha`` is evaluated along.

    ``alpha(lam)`` returns ``alpha_lam(x)`` or ``(alpha_lam(x), se)``; the
    homogeneity ``alpha_lam(l x) = l alpha_lam(x)`` supplies the speed.
    """
    if speed < 0:
        raise ValueError("speed must be nonnegative")
    if speed == 0:
        return RatePoint(0.0, 0.0, 0.0, True)
    ses = {}

    def g(lam):
        a, s = _split(alpha(lam))
        ses[lam] = s
        return speed * a - lam

    res = legendre_sup(g, lam_max, tol)
    se = speed * ses.get(res.argmax, 0.0)
    return RatePoint(float(speed), max(res.value, 0.0), res.argmax, res.attained, se)


def _curve_task(args):
    alpha, speed, lam_max, tol = args
    return rate_function(alpha, speed, lam_max, tol)


@dataclass
class RateFunctionCurve:
    direction: tuple
    source: str
    points: list

    @property
    def speeds(self):
        return [p.speed for p in self.points]

    @property
    def values(self):
        return [p.value for p in self.points]

    def midpoint_convex(self, slack=1e-9) -> bool:
        v = np.array(self.values)
        s = np.array(self.speeds)
        for i in range(len(s)):
            for j in range(i + 2, len(s)):
                for k in range(i + 1, j):
                    w = (s[k] - s[i]) / (s[j] - s[i])
                    if v[k] > (1 - w) * v[i] + w * v[j] + slack:
                        return False
        return True


def rate_curve(alpha, speeds: Sequence[float], direction=(1,), lam_max=LAM_MAX, tol=1e-10, workers=1):
    pts = pmap(_curve_task, [(alpha, float(s), lam_max, tol) for s in speeds], workers)
    return RateFunctionCurve(tuple(direction), getattr(alpha, "name", "callable"), pts)


# --------------------------------------------------------------------------
# asymptotes


@dataclass(frozen=True)
class AsymptoteReport:
    regime: str
    closed_form: float
    computed: float
    ratio: float
    note: str = ""


def small_x_asymptote(spec: EnvironmentSpec, x, alpha=None, lam_max=LAM_MAX) -> AsymptoteReport:
    """Compare ``I(x)`` with the quadratic ``(d/2) m |x|^2`` of simple random walk.

    ``m`` is the mean holding time and ``|x|`` the Euclidean norm. Only
    simple-random-walk kernels are accepted. The default exponent source is
    the exact recursion in one dimension and the half-space solver along a
    coordinate axis otherwise.
    """
    if not spec.is_srw:
        raise ValueError("small-speed asymptote requires simple random walk kernels")
    x = np.asarray(x, dtype=float).ravel()
    if x.size != spec.dim:
        raise ValueError("x must have spec.dim coordinates")
    r = float(np.linalg.norm(x))
    comparator = 0.5 * spec.dim * spec.mean_holding() * r * r
    if r == 0:
        return AsymptoteReport("small-x", 0.0, 0.0, 1.0)
    if alpha is None:
        axes = np.nonzero(x)[0]
        if spec.dim == 1:
            alpha = OracleAlpha(spec, (1,), n=1000)
        elif axes.size == 1:
            alpha = SolverAlpha(spec, axis=int(axes[0]))
        else:
            raise ValueError("default exponent source needs an axis-aligned x; pass alpha=")
    point = rate_function(alpha, r, lam_max)
    ratio = point.value / comparator
    return AsymptoteReport("small-x", comparator, point.value, ratio)


def large_x_asymptote(law_or_scale, nu: float, ell: float) -> AsymptoteReport:
    """``sup_lam (L(lam) * ell * nu - lam)`` in closed form, with a numeric check.

    ``law_or_scale`` is a HoldingLaw (its declared scale is used) or a
    TauberianScale. ``nu`` is the first-passage time constant in the
    direction of interest.
    """
    scale = law_or_scale if isinstance(law_or_scale, TauberianScale) else tauberian_scale(law_or_scale)
    c = float(ell) * float(nu)
    if c <= 0:
        raise ValueError("ell * nu must be positive")
    note = ""
    if scale.kind == "log":
        closed = c * (math.log(c) - 1.0)
    elif scale.kind == "power":
        gam = scale.exponent / (1.0 - scale.exponent)
        closed = (1.0 / (1.0 + gam)) * (gam / (1.0 + gam)) ** gam * c ** (1.0 + gam)
    elif scale.kind == "linear":
        if c > 1.0:
            return AsymptoteReport("large-x", math.inf, math.inf, 1.0, "infinite: speed beyond 1/Theta")
        closed = 0.0
        note = "boundary: supremum at lam = 0"
    else:
        raise ValueError(f"unknown scale kind {scale.kind!r}")

    def g(lam):
        if lam == 0.0:
            return -math.inf if scale.kind == "log" else 0.0
        return c * scale(lam) - lam

    lam_max = max(LAM_MAX, 100.0 * c ** (1.0 + (scale.exponent / (1 - scale.exponent) if scale.kind == "power" else 1.0)))
    numeric = legendre_sup(g, lam_max).value
    ratio = numeric / closed if closed != 0 else (1.0 if numeric == 0 else math.inf)
    return AsymptoteReport("large-x", closed, numeric, ratio, note)
