"""Counter-based random draws keyed by (seed, vehicle id, tick, stream).

Every vehicle owns an independent stream: a draw depends only on its key, never
on how many other draws happened before it. Stepping vehicles in any order, or
in parallel, gives the same numbers as stepping them sequentially by id.
"""

import numpy as np

# stream tags; one per kind of draw
MODE = 1
BACKOFF = 2
INIT_SOC = 11
TRIP_START = 12
TRIP_DURATION = 13
BATTERY = 14
EV_POWER = 15
FUEL = 16
UTILITY = 17

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_K_ID = np.uint64(0xD6E8FEB86659FD93)
_K_TICK = np.uint64(0xA0761D6478BD642F)
_K_STREAM = np.uint64(0xE7037ED1A0B428DB)


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniform(seed: int, ids, tick: int, stream: int) -> np.ndarray:
    """Uniform draws in [0, 1), one per id."""
    ids = np.atleast_1d(np.asarray(ids, dtype=np.uint64))
    with np.errstate(over="ignore"):
        z = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
        z = _mix(z ^ (ids * _K_ID))
        z = _mix(z ^ (np.uint64(tick & 0xFFFFFFFFFFFFFFFF) * _K_TICK) ^ (np.uint64(stream) * _K_STREAM))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def uniform_one(seed: int, vid: int, tick: int, stream: int) -> float:
    return float(uniform(seed, [vid], tick, stream)[0])
