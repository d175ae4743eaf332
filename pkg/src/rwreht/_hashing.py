"""Counter-based random numbers.

Every random quantity in the package is a pure function of a key tuple
``(seed, stream, i, j, ...)``: the key is folded through the SplitMix64
finalizer and the resulting 64-bit word is turned into a double. There is no
generator state, so values can be reproduced in any order, on any worker, and
for any subset of the lattice.
"""
import numba as nb
import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# stream tags
STREAM_KERNEL = 1
STREAM_LAW = 2
STREAM_STEP = 3
STREAM_HOLD = 4
STREAM_REPLICA = 5
STREAM_WEIGHT = 6
STREAM_SAMPLE = 7


@nb.njit(cache=True)
def mix64(z):
    z = z ^ (z >> _S30)
    z = z * _M1
    z = z ^ (z >> _S27)
    z = z * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True)
def combine(h, k):
    """Fold the integer ``k`` (any sign) into hash state ``h``."""
    return mix64(h ^ (np.uint64(k) + _GOLDEN))


@nb.njit(cache=True)
def root(seed, stream):
    return combine(mix64(np.uint64(seed) + _GOLDEN), stream)


@nb.njit(cache=True)
def to_unit(h):
    """Map a hash word to a double strictly inside (0, 1)."""
    return (np.float64(h >> _S11) + 0.5) * _INV53


@nb.njit(cache=True)
def site_uniforms(seed, stream, coords):
    """One uniform per row of the integer array ``coords`` (shape (n, d))."""
    n, d = coords.shape
    out = np.empty(n)
    base = root(seed, stream)
    for i in range(n):
        h = base
        for j in range(d):
            h = combine(h, coords[i, j])
        out[i] = to_unit(h)
    return out


@nb.njit(cache=True)
def _fold(seed, stream, keys):
    h = root(seed, stream)
    for k in keys:
        h = combine(h, k)
    return h


@nb.njit(cache=True)
def _fold_seed(seed, keys):
    return np.int64(_fold(seed, STREAM_REPLICA, keys) >> np.uint64(1))


@nb.njit(cache=True)
def _fold_unit(seed, stream, keys):
    return to_unit(_fold(seed, stream, keys))


def _keys(keys):
    return np.array([int(k) for k in keys], dtype=np.int64)


def derive_seed(seed, *keys):
    """Child seed for ``keys`` (replica index, task id, ...) as a Python int."""
    # hash words stay inside compiled code: a Python int round trip loses the uint64 type
    return int(_fold_seed(int(seed), _keys(keys)))


def uniform(seed, stream, *keys):
    """Scalar convenience wrapper: one uniform for the key tuple."""
    return float(_fold_unit(int(seed), int(stream), _keys(keys)))
