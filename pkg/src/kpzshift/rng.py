"""Counter-based splittable random numbers.

A stream is a 64-bit key; draw number i of a stream is the SplitMix64
finalizer applied to key + (i+1)*golden. Keys for a run and for a particle
label inside a run are derived by hashing, so every replica (and every
particle) owns an independent stream regardless of how runs are scheduled.
"""

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_RUN_SALT = np.uint64(0xD1B54A32D192ED03)
_SUB_SALT = np.uint64(0x8CB92BA72F3D8DD7)
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True)
def run_key(seed, run):
    """Stream key of replica ``run`` under master ``seed``."""
    s = mix64(np.uint64(seed) + _GOLDEN)
    return mix64(s ^ (np.uint64(run) * _RUN_SALT + _GOLDEN))


@nb.njit(cache=True)
def sub_key(key, label):
    """Independent sub-stream (e.g. one per particle label)."""
    return mix64(key ^ mix64(np.uint64(label) * _SUB_SALT + _GOLDEN))


@nb.njit(inline="always", cache=True)
def uniform(key, counter):
    """Draw ``counter`` of stream ``key`` as a double in (0, 1)."""
    x = mix64(key + (np.uint64(counter) + np.uint64(1)) * _GOLDEN)
    return (np.float64(x >> _S11) + 0.5) * _INV53


def run_keys(seed, runs):
    """Keys of runs 0..runs-1 (for bookkeeping in RunBatch)."""
    return np.array([run_key(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), r) for r in range(runs)],
                    dtype=np.uint64)
