"""Random environments and holding-time laws.

An environment assigns to every lattice site a transition kernel (the jump
probabilities toward the 2d nearest neighbours) and a holding-time law. Both
are drawn i.i.d. from finite weighted catalogues. Sites are sampled by
hashing ``(seed, stream, coordinates)``, so a field over any box is a pure
function of the seed and larger boxes agree with smaller ones on shared sites.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special

from . import _hashing

__all__ = [
    "SpecError",
    "TransitionKernel",
    "HoldingLaw",
    "Deterministic",
    "Exponential",
    "Gamma",
    "PowerAtZero",
    "StretchedAtZero",
    "TauberianScale",
    "EnvironmentSpec",
    "EnvironmentBox",
    "directions",
    "sample_environment",
    "log_laplace",
    "log_laplace_quadrature",
    "tauberian_scale",
    "common_scale",
    "drift",
    "nestling_check",
    "load_spec",
]


class SpecError(ValueError):
    """Invalid environment specification; ``where`` names the offending field."""

    def __init__(self, message, where=None):
        self.where = where
        self.message = message
        super().__init__(f"{where}: {message}" if where else message)


def directions(dim: int) -> np.ndarray:
    """Unit vectors ordered ``+e1, -e1, +e2, -e2, ...`` as a (2d, d) array."""
    out = np.zeros((2 * dim, dim), dtype=np.int64)
    for i in range(dim):
        out[2 * i, i] = 1
        out[2 * i + 1, i] = -1
    return out


# --------------------------------------------------------------------------
# transition kernels


@dataclass(frozen=True)
class TransitionKernel:
    """Jump probabilities toward ``directions(dim)``, in that order."""

    probs: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(x) for x in self.probs)
        object.__setattr__(self, "probs", p)
        if len(p) < 2 or len(p) % 2:
            raise SpecError(f"kernel needs 2d probabilities, got {len(p)}")
        if min(p) <= 0.0 or not all(math.isfinite(x) for x in p):
            raise SpecError(
                f"kernel probabilities must be strictly positive, got {p}"
            )
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise SpecError(f"kernel probabilities sum to {math.fsum(p)!r}, not 1")

    @property
    def dim(self) -> int:
        return len(self.probs) // 2

    @classmethod
    def symmetric(cls, dim: int) -> "TransitionKernel":
        return cls((1.0 / (2 * dim),) * (2 * dim))

    @classmethod
    def from_json(cls, obj, where="kernel"):
        probs = obj.get("probs") if isinstance(obj, dict) else obj
        if isinstance(probs, dict):
            # {"+1": p, "-1": q, "+2": ...}
            dim = len(probs) // 2
            try:
                probs = [probs[f"{s}{i + 1}"] for i in range(dim) for s in "+-"]
            except KeyError as exc:
                raise SpecError(f"missing direction {exc}", where) from None
        if not isinstance(probs, (list, tuple)):
            raise SpecError("expected a list of probabilities", where)
        try:
            return cls(tuple(probs))
        except SpecError as exc:
            raise SpecError(str(exc), where) from None


def drift(kernel: TransitionKernel) -> np.ndarray:
    """Local drift ``sum_e p(e) e``."""
    return np.asarray(kernel.probs) @ directions(kernel.dim)


# --------------------------------------------------------------------------
# holding-time laws


class HoldingLaw:
    """Base class of the five holding-time families.

    Subclasses are frozen dataclasses. ``code`` and ``params`` give the flat
    encoding used by the compiled samplers.
    """

    code: int = -1
    family: str = ""

    def mean(self) -> float:
        raise NotImplementedError

    def closed_laplace(self, lam: float) -> float | None:
        """Closed-form ``-log E[exp(-lam * tau)]`` when one exists."""
        return None

    def log_cdf(self, s: float) -> float:
        raise NotImplementedError

    def params(self) -> tuple[float, float]:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def _kinks(self) -> tuple[float, ...]:
        return ()

    @staticmethod
    def from_json(obj, where="law") -> "HoldingLaw":
        if not isinstance(obj, dict) or "family" not in obj:
            raise SpecError("law needs a 'family' field", where)
        fam = obj["family"]
        cls = _FAMILIES.get(fam)
        if cls is None:
            raise SpecError(
                f"unknown family {fam!r}; known: {sorted(_FAMILIES)}", where
            )
        names = cls._param_names
        try:
            args = [float(obj[n]) for n in names]
        except KeyError as exc:
            raise SpecError(f"family {fam!r} needs parameter {exc}", where) from None
        except (TypeError, ValueError):
            raise SpecError(f"parameters {names} must be numbers", where) from None
        try:
            return cls(*args)
        except SpecError as exc:
            raise SpecError(str(exc), where) from None


def _positive(name, *values):
    for v in values:
        if not (v > 0.0 and math.isfinite(v)):
            raise SpecError(f"{name} parameters must be positive and finite, got {v}")


@dataclass(frozen=True)
class Deterministic(HoldingLaw):
    c: float
    code = 0
    family = "deterministic"
    _param_names = ("c",)

    def __post_init__(self):
        _positive(self.family, self.c)

    def mean(self):
        return self.c

    def closed_laplace(self, lam):
        return lam * self.c

    def log_cdf(self, s):
        return 0.0 if s >= self.c else -math.inf

    def params(self):
        return (self.c, 0.0)

    def to_json(self):
        return {"family": self.family, "c": self.c}


@dataclass(frozen=True)
class Exponential(HoldingLaw):
    rate: float
    code = 1
    family = "exponential"
    _param_names = ("rate",)

    def __post_init__(self):
        _positive(self.family, self.rate)

    def mean(self):
        return 1.0 / self.rate

    def closed_laplace(self, lam):
        return math.log1p(lam / self.rate)

    def log_cdf(self, s):
        return math.log(-math.expm1(-self.rate * s)) if s > 0 else -math.inf

    def params(self):
        return (self.rate, 0.0)

    def to_json(self):
        return {"family": self.family, "rate": self.rate}


@dataclass(frozen=True)
class Gamma(HoldingLaw):
    shape: float
    scale: float
    code = 2
    family = "gamma"
    _param_names = ("shape", "scale")

    def __post_init__(self):
        _positive(self.family, self.shape, self.scale)

    def mean(self):
        return self.shape * self.scale

    def closed_laplace(self, lam):
        return self.shape * math.log1p(lam * self.scale)

    def log_cdf(self, s):
        if s <= 0:
            return -math.inf
        p = special.gammainc(self.shape, s / self.scale)
        return math.log(p) if p > 0 else -math.inf

    def params(self):
        return (self.shape, self.scale)

    def to_json(self):
        return {"family": self.family, "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class PowerAtZero(HoldingLaw):
    """Distribution function ``s**gamma`` on [0, 1]."""

    gamma: float
    code = 3
    family = "power_at_zero"
    _param_names = ("gamma",)

    def __post_init__(self):
        _positive(self.family, self.gamma)

    def mean(self):
        return self.gamma / (self.gamma + 1.0)

    def log_cdf(self, s):
        if s <= 0:
            return -math.inf
        return self.gamma * min(math.log(s), 0.0)

    def _kinks(self):
        return (1.0,)

    def params(self):
        return (self.gamma, 0.0)

    def to_json(self):
        return {"family": self.family, "gamma": self.gamma}


@dataclass(frozen=True)
class StretchedAtZero(HoldingLaw):
    """Distribution function ``exp(-s**-gamma)`` on (0, inf).

    The mean is ``Gamma(1 - 1/gamma)``, finite only for ``gamma > 1``.
    """

    gamma: float
    code = 4
    family = "stretched_at_zero"
    _param_names = ("gamma",)

    def __post_init__(self):
        _positive(self.family, self.gamma)
        if self.gamma <= 1.0:
            raise SpecError(
                f"stretched_at_zero needs gamma > 1 for a finite mean, got {self.gamma}"
            )

    def mean(self):
        return math.gamma(1.0 - 1.0 / self.gamma)

    def log_cdf(self, s):
        if s <= 0:
            return -math.inf
        e = -self.gamma * math.log(s)
        return -math.exp(e) if e < 709.0 else -math.inf

    def params(self):
        return (self.gamma, 0.0)

    def to_json(self):
        return {"family": self.family, "gamma": self.gamma}


_FAMILIES = {
    c.family: c for c in (Deterministic, Exponential, Gamma, PowerAtZero, StretchedAtZero)
}


def log_laplace(law: HoldingLaw, lam: float) -> float:
    """``theta_lam = -log int exp(-lam s) law(ds)``."""
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    if lam == 0:
        return 0.0
    closed = law.closed_laplace(lam)
    if closed is not None:
        return closed
    return log_laplace_quadrature(law, lam)


def log_laplace_quadrature(law: HoldingLaw, lam: float) -> float:
    """Quadrature route for ``theta_lam``, usable for every continuous family.

    Uses ``E[exp(-lam tau)] = lam * int_0^inf exp(-lam s) F(s) ds`` in the
    variable ``y = log s``, recentred at the peak of the integrand and
    rescaled by its curvature so the adaptive rule sees an O(1)-wide bump at
    any ``lam``. Relative accuracy is about 1e-12.
    """
    if lam == 0:
        return 0.0
    if isinstance(law, Deterministic):
        return lam * law.c
    log_lam = math.log(lam)

    def psi(y):
        if y > 700.0 or y < -700.0:
            return -math.inf
        s = math.exp(y)
        lf = law.log_cdf(s)
        if lf == -math.inf:
            return -math.inf
        return -lam * s + lf + y

    # the log of the integrand is concave in y for every catalogued family
    lo = -log_lam - 60.0
    hi = -log_lam + 60.0
    res = optimize.minimize_scalar(
        lambda y: -psi(y) if psi(y) > -math.inf else 1e300,
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12, "maxiter": 2000},
    )
    y0 = float(res.x)
    p0 = psi(y0)
    h = 1e-4
    curv = -(psi(y0 + h) - 2 * p0 + psi(y0 - h)) / (h * h)
    sigma = 1.0 / math.sqrt(curv) if curv > 1e-8 else 1.0
    sigma = min(sigma, 10.0)

    def g(w):
        v = psi(y0 + sigma * w) - p0
        return math.exp(v) if v > -745.0 else 0.0

    cuts = sorted({0.0, *((math.log(k) - y0) / sigma for k in law._kinks())})
    bounds = [-math.inf, *cuts, math.inf]
    total = 0.0
    with warnings.catch_warnings():
        # quadpack flags roundoff near 1e-12 relative; that is the floor we ask for
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(bounds[:-1], bounds[1:]):
            val, _ = integrate.quad(g, a, b, epsabs=0.0, epsrel=1e-12, limit=400)
            total += val
    return -(log_lam + p0 + math.log(sigma * total))


# --------------------------------------------------------------------------
# Tauberian scales


@dataclass(frozen=True)
class TauberianScale:
    """Normalisation ``L`` with ``theta_lam / L(lam) -> theta`` as lam grows.

    ``kind`` is ``"linear"`` (L = lam), ``"log"`` (L = log lam) or
    ``"power"`` (L = lam**exponent).
    """

    kind: str
    theta: float
    exponent: float = 1.0

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.kind == "linear":
            out = lam
        elif self.kind == "log":
            out = np.log(lam)
        else:
            out = lam**self.exponent
        return float(out) if out.ndim == 0 else out

    def same_scale(self, other: "TauberianScale") -> bool:
        return self.kind == other.kind and (
            self.kind != "power" or abs(self.exponent - other.exponent) < 1e-12
        )


def _stretched_theta(law: StretchedAtZero) -> float:
    # theta_lam = Theta L + b log(lam) + c + o(1): solve for Theta from three lams
    ex = law.gamma / (law.gamma + 1.0)
    lams = np.array([1e8, 1e10, 1e12])
    rows = np.column_stack([lams**ex, np.log(lams), np.ones(3)])
    vals = np.array([log_laplace_quadrature(law, lam) for lam in lams])
    coef = np.linalg.solve(rows, vals)
    return float(coef[0])


def tauberian_scale(law: HoldingLaw) -> TauberianScale:
    """Declared scale and limit for a catalogued law."""
    if isinstance(law, Deterministic):
        return TauberianScale("linear", law.c)
    if isinstance(law, Exponential):
        return TauberianScale("log", 1.0)
    if isinstance(law, Gamma):
        return TauberianScale("log", law.shape)
    if isinstance(law, PowerAtZero):
        return TauberianScale("log", law.gamma)
    if isinstance(law, StretchedAtZero):
        ex = law.gamma / (law.gamma + 1.0)
        return TauberianScale("power", _stretched_theta(law), ex)
    raise SpecError(f"no Tauberian scale declared for {law!r}")


# --------------------------------------------------------------------------
# environment specifications


def _weights(raw, n, where):
    if raw is None:
        raw = [1.0] * n
    w = np.asarray(raw, dtype=float)
    if w.shape != (n,) or np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise SpecError("weights must be positive, one per catalogue entry", where)
    return tuple((w / w.sum()).tolist())


@dataclass(frozen=True)
class EnvironmentSpec:
    """I.i.d. site law: a weighted kernel catalogue and a weighted law catalogue."""

    dim: int
    kernels: tuple[TransitionKernel, ...]
    laws: tuple[HoldingLaw, ...]
    kernel_weights: tuple[float, ...] = None
    law_weights: tuple[float, ...] = None

    def __post_init__(self):
        if self.dim < 1:
            raise SpecError("dim must be >= 1", "dim")
        if not self.kernels:
            raise SpecError("empty kernel catalogue", "kernels")
        if not self.laws:
            raise SpecError("empty law catalogue", "laws")
        for i, k in enumerate(self.kernels):
            if k.dim != self.dim:
                raise SpecError(f"kernel has dim {k.dim}, spec has {self.dim}", f"kernels[{i}]")
        object.__setattr__(self, "kernels", tuple(self.kernels))
        object.__setattr__(self, "laws", tuple(self.laws))
        object.__setattr__(
            self, "kernel_weights", _weights(self.kernel_weights, len(self.kernels), "kernels")
        )
        object.__setattr__(
            self, "law_weights", _weights(self.law_weights, len(self.laws), "laws")
        )

    @classmethod
    def homogeneous(cls, kernel: TransitionKernel, law: HoldingLaw) -> "EnvironmentSpec":
        return cls(kernel.dim, (kernel,), (law,))

    @classmethod
    def srw(cls, dim: int, law: HoldingLaw = None) -> "EnvironmentSpec":
        return cls.homogeneous(TransitionKernel.symmetric(dim), law or Deterministic(1.0))

    @property
    def is_srw(self) -> bool:
        target = 1.0 / (2 * self.dim)
        return all(max(abs(p - target) for p in k.probs) < 1e-12 for k in self.kernels)

    @property
    def is_homogeneous(self) -> bool:
        return len(self.kernels) == 1 and len(self.laws) == 1

    def mean_holding(self) -> float:
        return float(sum(w * law.mean() for w, law in zip(self.law_weights, self.laws)))

    def theta_table(self, lam: float) -> np.ndarray:
        return np.array([log_laplace(law, lam) for law in self.laws])

    @classmethod
    def from_json(cls, obj) -> "EnvironmentSpec":
        if not isinstance(obj, dict):
            raise SpecError("environment spec must be a JSON object")
        if "dim" not in obj:
            raise SpecError("missing field", "dim")
        dim = obj["dim"]
        if not isinstance(dim, int) or isinstance(dim, bool):
            raise SpecError("must be an integer", "dim")
        kern = obj.get("kernels")
        laws = obj.get("laws")
        if not isinstance(kern, list) or not kern:
            raise SpecError("must be a nonempty list", "kernels")
        if not isinstance(laws, list) or not laws:
            raise SpecError("must be a nonempty list", "laws")
        kernels = tuple(
            TransitionKernel.from_json(k, f"kernels[{i}]") for i, k in enumerate(kern)
        )
        law_objs = tuple(HoldingLaw.from_json(v, f"laws[{i}]") for i, v in enumerate(laws))
        kw = [k.get("weight", 1.0) if isinstance(k, dict) else 1.0 for k in kern]
        lw = [v.get("weight", 1.0) for v in laws]
        return cls(dim, kernels, law_objs, kw, lw)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "kernels": [
                {"probs": list(k.probs), "weight": w}
                for k, w in zip(self.kernels, self.kernel_weights)
            ],
            "laws": [
                {**law.to_json(), "weight": w} for law, w in zip(self.laws, self.law_weights)
            ],
        }


def load_spec(path) -> EnvironmentSpec:
    with open(Path(path)) as fh:
        return EnvironmentSpec.from_json(json.load(fh))


def common_scale(spec: EnvironmentSpec) -> tuple[TauberianScale, np.ndarray]:
    """Scale shared by every law in the catalogue, and Theta per catalogue entry.

    Raises SpecError when the laws have no common normalisation (different
    scale kinds, or stretched laws with different indices).
    """
    scales = [tauberian_scale(law) for law in spec.laws]
    first = scales[0]
    for s in scales[1:]:
        if not first.same_scale(s):
            raise SpecError(
                "holding laws admit no common Tauberian scale: "
                f"{first.kind} vs {s.kind} (regular variation with different indices)",
                "laws",
            )
    return first, np.array([s.theta for s in scales])


def nestling_check(spec) -> bool:
    """True iff 0 lies in the convex hull of the local drifts of the support."""
    kernels = spec.kernels if isinstance(spec, EnvironmentSpec) else tuple(spec)
    D = np.array([drift(k) for k in kernels])
    if np.any(np.all(np.abs(D) <= 1e-12, axis=1)):
        return True
    n, d = D.shape
    # feasibility: mu >= 0, sum mu = 1, D^T mu = 0
    A_eq = np.vstack([D.T, np.ones((1, n))])
    b_eq = np.concatenate([np.zeros(d), [1.0]])
    res = optimize.linprog(
        np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * n, method="highs"
    )
    return bool(res.status == 0)


# --------------------------------------------------------------------------
# sampled boxes


def _box_coords(lo, hi) -> np.ndarray:
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _catalogue_index(u: np.ndarray, weights) -> np.ndarray:
    if len(weights) == 1:
        return np.zeros(u.shape, dtype=np.int64)
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, u, side="right").astype(np.int64)


@dataclass(eq=False)
class EnvironmentBox:
    """A sampled environment restricted to ``prod_i [lo_i, hi_i]``.

    ``kernel_index`` and ``law_index`` are arrays of box shape pointing into
    the spec's catalogues.
    """

    spec: EnvironmentSpec
    seed: int
    lo: tuple[int, ...]
    hi: tuple[int, ...]
    kernel_index: np.ndarray = field(repr=False)
    law_index: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def contains(self, site) -> bool:
        return all(a <= s <= b for s, a, b in zip(site, self.lo, self.hi))

    def offset(self, site) -> tuple[int, ...]:
        if len(site) != self.dim or not self.contains(site):
            raise ValueError(f"site {tuple(site)} outside box {self.lo}..{self.hi}")
        return tuple(int(s) - a for s, a in zip(site, self.lo))

    def flat_index(self, site) -> int:
        return int(np.ravel_multi_index(self.offset(site), self.shape))

    def probs(self) -> np.ndarray:
        """Per-site jump probabilities, shape ``box shape + (2d,)``."""
        table = np.array([k.probs for k in self.spec.kernels])
        return table[self.kernel_index]

    def theta(self, lam: float) -> np.ndarray:
        return self.spec.theta_table(lam)[self.law_index]

    def kernel_at(self, site) -> TransitionKernel:
        return self.spec.kernels[self.kernel_index[self.offset(site)]]

    def law_at(self, site) -> HoldingLaw:
        return self.spec.laws[self.law_index[self.offset(site)]]

    def extended(self, lo, hi) -> "EnvironmentBox":
        """Same realisation on another box (values agree on shared sites)."""
        return sample_environment(self.spec, (lo, hi), self.seed)

    def grown(self, margin: int) -> "EnvironmentBox":
        return self.extended(
            tuple(a - margin for a in self.lo), tuple(b + margin for b in self.hi)
        )

    def coords(self) -> np.ndarray:
        return _box_coords(self.lo, self.hi)


def _normalise_box(box, dim):
    lo, hi = box
    lo = tuple(int(v) for v in np.atleast_1d(lo))
    hi = tuple(int(v) for v in np.atleast_1d(hi))
    if len(lo) != dim or len(hi) != dim:
        raise SpecError(f"box corners must have {dim} coordinates", "box")
    if any(a > b for a, b in zip(lo, hi)):
        raise SpecError(f"empty box {lo}..{hi}", "box")
    return lo, hi


def sample_environment(spec: EnvironmentSpec, box, seed: int) -> EnvironmentBox:
    """Sample kernels and laws on ``box = (lo, hi)`` (inclusive corners)."""
    lo, hi = _normalise_box(box, spec.dim)
    coords = _box_coords(lo, hi)
    shape = tuple(b - a + 1 for a, b in zip(lo, hi))
    uk = _hashing.site_uniforms(int(seed), _hashing.STREAM_KERNEL, coords)
    ul = _hashing.site_uniforms(int(seed), _hashing.STREAM_LAW, coords)
    ki = _catalogue_index(uk, spec.kernel_weights).reshape(shape)
    li = _catalogue_index(ul, spec.law_weights).reshape(shape)
    return EnvironmentBox(spec, int(seed), lo, hi, ki, li)


def box_around(points: Sequence[Sequence[int]], margin: int):
    """Smallest box containing ``points``, padded by ``margin`` on every face."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
    lo = tuple(int(v) - margin for v in pts.min(axis=0))
    hi = tuple(int(v) + margin for v in pts.max(axis=0))
    return lo, hi
