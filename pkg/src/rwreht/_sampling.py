"""Compiled draws from the holding-time families, keyed by hash words."""
import math

import numba as nb
import numpy as np

from ._hashing import combine, to_unit

DETERMINISTIC, EXPONENTIAL, GAMMA, POWER, STRETCHED = 0, 1, 2, 3, 4


def law_table(laws):
    """``(codes, p1, p2)`` arrays for a catalogue of HoldingLaw objects."""
    codes = np.array([law.code for law in laws], dtype=np.int64)
    p = np.array([law.params() for law in laws], dtype=np.float64).reshape(-1, 2)
    return codes, p[:, 0].copy(), p[:, 1].copy()


@nb.njit(cache=True)
def _std_normal(h):
    u1 = to_unit(combine(h, 1))
    u2 = to_unit(combine(h, 2))
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@nb.njit(cache=True)
def _gamma_unit(shape, h):
    # Marsaglia-Tsang; shape < 1 boosted through U^(1/shape)
    boost = 1.0
    if shape < 1.0:
        boost = to_unit(combine(h, -1)) ** (1.0 / shape)
        shape += 1.0
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    k = 0
    while True:
        hk = combine(h, k)
        x = _std_normal(hk)
        v = 1.0 + c * x
        k += 1
        if v <= 0.0:
            continue
        v = v * v * v
        u = to_unit(combine(hk, 3))
        if math.log(u) < 0.5 * x * x + d - d * v + d * math.log(v):
            return d * v * boost


@nb.njit(cache=True)
def draw_holding(code, p1, p2, h):
    """One holding time from the family ``code`` with parameters ``(p1, p2)``."""
    if code == DETERMINISTIC:
        return p1
    if code == EXPONENTIAL:
        return -math.log(to_unit(h)) / p1
    if code == GAMMA:
        return _gamma_unit(p1, h) * p2
    if code == POWER:
        return to_unit(h) ** (1.0 / p1)
    # Frechet-type cdf exp(-s^-gamma)
    return (-math.log(to_unit(h))) ** (-1.0 / p1)
