"""Exact-in-law samplers for TASEP, PASEP and PNG.

TASEP: every particle has its own rate-1 Poisson clock (its own RNG
sub-stream keyed by the particle label) and a jump attempt succeeds iff the
target site is empty. A particle only feels the particle in front of it, so
particles are processed front to back, each one against the recorded jump
times of its predecessor. With step data this is exact for particles
1..n; with alternating data labels n-window..n are simulated and the front
one is left unblocked.

PASEP: attempt-based kinetic Monte Carlo with a global clock (total rate =
number of particles, p to the right, q to the left, blocked attempts
rejected) on labels 1..n+window, time horizon t/gamma.

PNG: Poisson points of intensity 1 in rotated coordinates (u, v) =
(tau + x, tau - x) (intensity 2 in (x, tau)), restricted to the backward
light cone of (0, t); the height at the origin is the longest increasing
chain, computed by patience sorting. A literal step-dynamics simulator is
kept as an oracle.
"""

import bisect
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numba as nb
import numpy as np
from scipy import stats

from .errors import SimulationError
from .rng import run_key, run_keys, sub_key, uniform
from .shifts import canonical_model

SIM_MODELS = ("tasep_step", "tasep_alt", "pasep_step", "png_droplet", "png_flat")


@dataclass(frozen=True)
class SimConfig:
    model: str
    t: float
    runs: int = 1
    seed: int = 0
    n: Optional[int] = None
    p: float = 1.0
    window: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "model", canonical_model(self.model))
        if not self.t >= 0:
            raise ValueError("t must be nonnegative")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.model in ("tasep_step", "tasep_alt", "pasep_step"):
            if self.n is None or self.n < 1:
                raise ValueError(f"{self.model} needs a tagged index n >= 1")
        if self.model == "pasep_step":
            if not 0.5 < self.p <= 1.0:
                raise ValueError("pasep needs p in (1/2, 1]")
        elif self.p != 1.0:
            raise ValueError(f"p is only used by pasep_step")
        if self.window is not None and self.window < 1:
            raise ValueError("window must be positive")

    @property
    def q(self):
        return 1.0 - self.p

    @property
    def gamma(self):
        return self.p - self.q

    @property
    def horizon(self):
        """Physical time simulated (t/gamma for PASEP)."""
        return self.t / self.gamma if self.model == "pasep_step" else self.t

    @property
    def resolved_window(self):
        if self.window is not None:
            return int(self.window)
        T = self.horizon
        return int(math.ceil(2.0 * T + 10.0 * math.sqrt(T))) + 1


@dataclass
class RunBatch:
    config: SimConfig
    samples: np.ndarray
    rng_streams: np.ndarray = field(repr=False)


# ---------------------------------------------------------------------------
# TASEP, sequential per-particle clocks


@nb.njit(cache=True, nogil=True)
def _tasep_sequential(key, first_label, last_label, x_first, spacing, t, record):
    """Position at time t of particle ``last_label``.

    Particles first_label..last_label start at x_first - spacing*(k-first).
    The front particle is never blocked. If ``record`` has room for all
    labels, the final position of every particle is stored there.
    """
    cap = int(t + 10.0 * math.sqrt(t + 1.0) + 64)
    prev_times = np.empty(cap, dtype=np.float64)
    cur_times = np.empty(cap, dtype=np.float64)
    prev_count = 0
    prev_x0 = 0
    x = x_first
    for label in range(first_label, last_label + 1):
        x0 = x_first - spacing * (label - first_label)
        x = x0
        k = sub_key(key, label)
        ctr = 0
        tau = 0.0
        j = 0
        count = 0
        while True:
            tau += -math.log(uniform(k, ctr))
            ctr += 1
            if tau > t:
                break
            if label == first_label:
                ok = True
            else:
                while j < prev_count and prev_times[j] <= tau:
                    j += 1
                ok = prev_x0 + j > x + 1
            if ok:
                x += 1
                if count == cur_times.shape[0]:
                    grown = np.empty(2 * count, dtype=np.float64)
                    grown[:count] = cur_times[:count]
                    cur_times = grown
                cur_times[count] = tau
                count += 1
        if record.shape[0] > label - first_label:
            record[label - first_label] = x
        prev_times, cur_times = cur_times, prev_times
        prev_count = count
        prev_x0 = x0
    return x


_NO_RECORD = np.empty(0, dtype=np.int64)


def tasep_run(config, key):
    """x_n(t) for tasep_step (exact) or tasep_alt (window cutoff)."""
    n = int(config.n)
    if config.model == "tasep_step":
        return int(_tasep_sequential(np.uint64(key), 1, n, -1, 1, float(config.t), _NO_RECORD))
    if config.model == "tasep_alt":
        w = config.resolved_window
        first = n - w
        return int(_tasep_sequential(np.uint64(key), first, n, -2 * first, 2, float(config.t),
                                     _NO_RECORD))
    raise ValueError("tasep_run needs tasep_step or tasep_alt")


def tasep_positions(config, key, labels):
    """Final positions of step-data particles 1..labels under the streams of
    ``key`` (labels may exceed config.n)."""
    if config.model != "tasep_step":
        raise ValueError("tasep_positions needs tasep_step")
    out = np.empty(int(labels), dtype=np.int64)
    _tasep_sequential(np.uint64(key), 1, int(labels), -1, 1, float(config.t), out)
    return out


@nb.njit(cache=True, nogil=True)
def _tasep_batch(seed, start, stop, step_ic, n, window, t):
    out = np.empty(stop - start, dtype=np.int64)
    none = np.empty(0, dtype=np.int64)
    for r in range(start, stop):
        key = run_key(seed, r)
        if step_ic:
            out[r - start] = _tasep_sequential(key, 1, n, -1, 1, t, none)
        else:
            first = n - window
            out[r - start] = _tasep_sequential(key, first, n, -2 * first, 2, t, none)
    return out


# ---------------------------------------------------------------------------
# PASEP, global-clock kinetic Monte Carlo


@nb.njit(cache=True, nogil=True)
def _pasep_kmc(key, m, tag, p, horizon, check_order):
    """Step data x_k = -k for k = 1..m; returns x_tag at ``horizon``.

    Particle 1 is free on the right (it is the true front), particle m is
    free on the left (window boundary).
    """
    x = np.empty(m, dtype=np.int64)
    for i in range(m):
        x[i] = -(i + 1)
    total = float(m)
    tm = 0.0
    ctr = 0
    while True:
        tm += -math.log(uniform(key, ctr)) / total
        ctr += 1
        if tm > horizon:
            break
        v = uniform(key, ctr) * total
        ctr += 1
        i = int(v)
        if i >= m:
            i = m - 1
        right = (v - i) < p
        if right:
            if i == 0 or x[i - 1] > x[i] + 1:
                x[i] += 1
        else:
            if i == m - 1 or x[i + 1] < x[i] - 1:
                x[i] -= 1
        if check_order:
            if i > 0 and x[i - 1] <= x[i]:
                return -(1 << 62)
            if i < m - 1 and x[i + 1] >= x[i]:
                return -(1 << 62)
    return x[tag - 1]


def pasep_run(config, key, check_order=False):
    """x_n(t/gamma) for pasep_step."""
    if config.model != "pasep_step":
        raise ValueError("pasep_run needs pasep_step")
    m = int(config.n) + config.resolved_window
    val = int(_pasep_kmc(np.uint64(key), m, int(config.n), float(config.p), config.horizon, check_order))
    if val == -(1 << 62):
        raise SimulationError(-1, "particle order violated")
    return val


@nb.njit(cache=True, nogil=True)
def _pasep_batch(seed, start, stop, m, tag, p, horizon):
    out = np.empty(stop - start, dtype=np.int64)
    for r in range(start, stop):
        out[r - start] = _pasep_kmc(run_key(seed, r), m, tag, p, horizon, False)
    return out


# ---------------------------------------------------------------------------
# PNG


@nb.njit(cache=True, nogil=True)
def _png_points(key, t, flat):
    """Nucleation points (u, v) of the backward light cone of (0, t), sorted
    by u. Droplet: square [0, t]^2. Flat: triangle u, v <= t, u + v >= 0.
    Arrivals are generated along u from the cumulative area so no sort is
    needed."""
    area = 2.0 * t * t if flat else t * t
    cap = int(area + 10.0 * math.sqrt(area) + 16)
    us = np.empty(cap, dtype=np.float64)
    vs = np.empty(cap, dtype=np.float64)
    count = 0
    acc = 0.0
    ctr = 0
    while True:
        acc += -math.log(uniform(key, ctr))
        ctr += 1
        if acc > area:
            break
        w = uniform(key, ctr)
        ctr += 1
        if flat:
            u = -t + math.sqrt(2.0 * acc)
            v = -u + (t + u) * w
        else:
            u = acc / t
            v = t * w
        if count == us.shape[0]:
            nu = np.empty(2 * count, dtype=np.float64)
            nv = np.empty(2 * count, dtype=np.float64)
            nu[:count] = us[:count]
            nv[:count] = vs[:count]
            us = nu
            vs = nv
        us[count] = u
        vs[count] = v
        count += 1
    return us[:count], vs[:count]


@nb.njit(cache=True, nogil=True)
def longest_chain(vs):
    """Length of the longest increasing subsequence of vs (patience sorting).

    With points sorted by u this is the longest chain for the order
    u1 <= u2, v1 <= v2."""
    tops = np.empty(vs.shape[0], dtype=np.float64)
    piles = 0
    for v in vs:
        lo = 0
        hi = piles
        while lo < hi:
            mid = (lo + hi) // 2
            if tops[mid] < v:
                lo = mid + 1
            else:
                hi = mid
        tops[lo] = v
        if lo == piles:
            piles += 1
    return piles


@nb.njit(cache=True, nogil=True)
def _png_chain(key, t, flat):
    us, vs = _png_points(key, t, flat)
    return longest_chain(vs)


def png_points(config, key):
    """Nucleation points of one replica as arrays (x, tau)."""
    us, vs = _png_points(np.uint64(key), float(config.t), config.model == "png_flat")
    return 0.5 * (us - vs), 0.5 * (us + vs)


def png_height(config, key):
    """h_t(0) from the longest-chain representation."""
    if config.model not in ("png_droplet", "png_flat"):
        raise ValueError("png_height needs png_droplet or png_flat")
    return int(_png_chain(np.uint64(key), float(config.t), config.model == "png_flat"))


@nb.njit(cache=True, nogil=True)
def _png_batch(seed, start, stop, t, flat):
    out = np.empty(stop - start, dtype=np.int64)
    for r in range(start, stop):
        out[r - start] = _png_chain(run_key(seed, r), t, flat)
    return out


def png_step_dynamics(xs, taus, t):
    """Height at the origin at time t from the literal PNG interface.

    Each nucleation (x, tau) creates an up-step and a down-step at x; up-steps
    move left and down-steps move right with unit speed; a down-step meeting
    the up-step to its right annihilates with it. h(0) counts up-steps minus
    down-steps to the left of the origin.
    """
    order = np.argsort(taus)
    events = [(float(taus[i]), float(xs[i])) for i in order if taus[i] <= t]
    # each step: [x_ref, tau_ref, kind]; kind +1 up (moves left), -1 down
    steps = []
    now = 0.0

    def pos(st, when):
        return st[0] - st[2] * (when - st[1])

    def next_collision(when):
        best = math.inf
        at = -1
        for i in range(len(steps) - 1):
            a, b = steps[i], steps[i + 1]
            if a[2] == -1 and b[2] == 1:
                tc = when + 0.5 * (pos(b, when) - pos(a, when))
                if tc < best:
                    best, at = tc, i
        return best, at

    k = 0
    while True:
        t_next = events[k][0] if k < len(events) else t
        tc, at = next_collision(now)
        if tc <= t_next:
            del steps[at:at + 2]
            now = tc
            continue
        now = t_next
        if k >= len(events):
            break
        x = events[k][1]
        positions = [pos(st, now) for st in steps]
        idx = bisect.bisect_left(positions, x)
        steps[idx:idx] = [[x, now, 1], [x, now, -1]]
        k += 1
    return int(sum(st[2] for st in steps if pos(st, t) < 0.0))


def direct_points(config, rng):
    """Nucleations of intensity 2 in (x, tau) drawn with a numpy Generator by
    rejection from the bounding box of the light-cone region; independent
    of the rotated-coordinate sampler."""
    t = float(config.t)
    flat = config.model == "png_flat"
    half = t if flat else 0.5 * t
    box = 2.0 * half * t
    count = rng.poisson(2.0 * box)
    x = rng.uniform(-half, half, count)
    tau = rng.uniform(0.0, t, count)
    keep = np.abs(x) <= t - tau
    if not flat:
        keep &= np.abs(x) <= tau
    return x[keep], tau[keep]


def png_direct_oracle(config, rng):
    """h_t(0) from the literal step dynamics (t <= 5).

    ``rng`` is either a numpy Generator (points from direct_points) or an
    integer stream key (the same points png_height uses for that key).
    """
    if config.t > 5:
        raise ValueError("the direct oracle is meant for t <= 5")
    if config.model not in ("png_droplet", "png_flat"):
        raise ValueError("png_direct_oracle needs png_droplet or png_flat")
    if isinstance(rng, np.random.Generator):
        xs, taus = direct_points(config, rng)
    else:
        xs, taus = png_points(config, rng)
    return png_step_dynamics(xs, taus, float(config.t))


# ---------------------------------------------------------------------------
# batches


def default_workers():
    try:
        return max(1, int(os.environ.get("KPZSHIFT_THREADS", "1")))
    except ValueError:
        return 1


def _chunk(config, start, stop):
    seed = np.uint64(config.seed)
    m = config.model
    if m == "tasep_step":
        return _tasep_batch(seed, start, stop, True, int(config.n), 0, float(config.t))
    if m == "tasep_alt":
        return _tasep_batch(seed, start, stop, False, int(config.n), config.resolved_window, float(config.t))
    if m == "pasep_step":
        mm = int(config.n) + config.resolved_window
        return _pasep_batch(seed, start, stop, mm, int(config.n), float(config.p), config.horizon)
    if m in ("png_droplet", "png_flat"):
        return _png_batch(seed, start, stop, float(config.t), m == "png_flat")
    raise ValueError(m)


def window_check(config, level=1e-9):
    """Warn when the light-cone bound P(Poisson(T) >= window) exceeds level."""
    if config.model not in ("tasep_alt", "pasep_step"):
        return
    w = config.resolved_window
    tail = float(stats.poisson.sf(w - 1, config.horizon))
    if tail > level:
        warnings.warn(f"window {w} is small for horizon {config.horizon:g}: boundary influence "
                      f"probability up to {tail:.1e}", RuntimeWarning, stacklevel=3)


def batch(config, workers=None):
    """Run config.runs replicas; sample r uses the stream run_key(seed, r), so
    the result does not depend on how runs are split across workers."""
    window_check(config)
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValueError("workers must be positive")
    runs = config.runs
    bounds = np.linspace(0, runs, min(workers, runs) + 1).astype(int)
    pieces = list(zip(bounds[:-1], bounds[1:]))
    if len(pieces) == 1:
        parts = [_chunk(config, 0, runs)]
    else:
        with ThreadPoolExecutor(max_workers=len(pieces)) as ex:
            parts = list(ex.map(lambda ab: _chunk(config, int(ab[0]), int(ab[1])), pieces))
    samples = np.concatenate(parts)
    return RunBatch(config, samples, run_keys(config.seed, runs))


def replica(config, run):
    """Single replica ``run`` through the per-run functions."""
    key = run_key(np.uint64(config.seed), run)
    m = config.model
    try:
        if m in ("tasep_step", "tasep_alt"):
            return tasep_run(config, key)
        if m == "pasep_step":
            return pasep_run(config, key)
        return png_height(config, key)
    except Exception as exc:  # attach the run index
        raise SimulationError(run, str(exc)) from exc
