"""From raw samples to lattice distributions, moments, CDF gaps and the
multi-time fit of (v_inf, Gamma, a).

Rescaling conventions (see ScalingConstants):
    heights    s = (h - c1 t - a) delta_t
    particles  s = (ref + c1 t - a - x) delta_t,  ref = -2n (alternating) or 0,
so that larger positions map to smaller s and F_t(s) = P(x >= X(s)).
"""

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .fredholm import LatticeGrid, LimitLaw, law_cdf, law_moments
from .shifts import ScalingConstants, canonical_model, scaling_constants

CDF_WINDOW = (-4.0, 2.0)
JACKKNIFE_BLOCKS = 100


@dataclass
class LatticeDistribution:
    """Probability mass on sorted lattice sites of I_t.

    ``values`` keeps the per-sample rescaled observables (in run order) when
    the distribution comes from data; it is None for exact distributions.
    """

    grid: LatticeGrid
    sites: np.ndarray
    mass: np.ndarray
    count: float
    values: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if np.any(self.mass < 0) or abs(float(np.sum(self.mass)) - 1.0) > 1e-12:
            raise ValueError("masses must be nonnegative and sum to 1")

    @property
    def delta(self):
        return self.grid.delta

    def cdf(self, s):
        """F_t(s) = sum of masses at sites <= s (right-continuous)."""
        cum = np.cumsum(self.mass)
        idx = np.searchsorted(self.sites, np.asarray(s, dtype=float) + 1e-9 * self.delta, side="right")
        out = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
        return float(out) if np.ndim(s) == 0 else out

    def density(self):
        """p_t(s) = mass(s)/delta_t at each site."""
        return self.mass / self.delta

    @classmethod
    def from_cdf(cls, grid, cdf, lo, hi):
        """Exact lattice law with F_t(s) = cdf(s) at sites in [lo, hi]; the
        mass outside is lumped into the end sites."""
        sites = grid.points(lo - grid.delta, hi)
        vals = np.array([cdf(s) for s in sites])
        vals[-1] = 1.0
        mass = np.diff(np.concatenate([[0.0], vals]))
        return cls(grid, sites, mass, math.inf)


def reference_position(model, t, n=None, constants=None):
    """Center of the rescaling: c1 t for heights and step data, -2n + c1 t
    for alternating data."""
    c = constants if constants is not None else scaling_constants(model)
    base = c.c1 * float(t)
    if c.model == "tasep_alt":
        if n is None:
            raise ValueError("alternating data needs n")
        base += -2.0 * n
    return base


def rescale(samples, constants, t, n=None):
    """Rescaled observables s for raw integer samples."""
    x = np.asarray(samples, dtype=float)
    delta = constants.delta_t(t)
    center = reference_position(constants.model, t, n, constants)
    if constants.is_height:
        return (x - center - constants.a) * delta
    return (center - constants.a - x) * delta


def make_distribution(samples, constants, t, n=None):
    """Bin raw samples onto the lattice I_t of the model."""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise ValueError("empty sample")
    delta = constants.delta_t(t)
    s = rescale(samples, constants, t, n)
    anchor = float(rescale(np.array([0]), constants, t, n)[0]) % delta
    grid = LatticeGrid(delta, anchor)
    k = np.rint((s - anchor) / delta).astype(np.int64)
    ks, counts = np.unique(k, return_counts=True)
    sites = anchor + delta * ks
    mass = counts / counts.sum()
    return LatticeDistribution(grid, sites, mass, float(samples.size), s)


# ---------------------------------------------------------------------------
# moments


def _four_moments(x):
    mean = float(np.mean(x))
    c = x - mean
    var = float(np.mean(c * c))
    if var == 0.0:
        return mean, 0.0, 0.0, 0.0
    skew = float(np.mean(c ** 3)) / var ** 1.5
    kurt = float(np.mean(c ** 4)) / var ** 2 - 3.0
    return mean, var, skew, kurt


def _weighted_moments(sites, mass):
    mean = float(np.sum(sites * mass))
    c = sites - mean
    var = float(np.sum(c * c * mass))
    if var == 0.0:
        return mean, 0.0, 0.0, 0.0
    return (mean, var, float(np.sum(c ** 3 * mass)) / var ** 1.5,
            float(np.sum(c ** 4 * mass)) / var ** 2 - 3.0)


def jackknife(values, stat, blocks=JACKKNIFE_BLOCKS):
    """Block jackknife standard errors of a vector-valued statistic."""
    values = np.asarray(values)
    b = min(blocks, len(values))
    edges = np.linspace(0, len(values), b + 1).astype(int)
    reps = []
    for i in range(b):
        keep = np.concatenate([values[: edges[i]], values[edges[i + 1]:]])
        reps.append(stat(keep))
    reps = np.asarray(reps, dtype=float)
    return np.sqrt((b - 1) / b * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))


def moments(dist, max_order=4):
    """(mean, variance, skewness, excess kurtosis) of the lattice law and
    their jackknife standard errors (zeros for exact distributions)."""
    vals = _weighted_moments(dist.sites, dist.mass)
    if dist.values is not None:
        if dist.count < 100:
            raise ValueError("moments need at least 100 samples")
        ses = jackknife(dist.values, _four_moments)
    else:
        ses = np.zeros(4)
    return tuple(vals[:max_order]), tuple(float(v) for v in ses[:max_order])


def raw_moment(dist, m):
    return float(np.sum(dist.sites ** m * dist.mass))


# ---------------------------------------------------------------------------
# comparisons


def compare_cdf(dist, law, shift_mode="midpoint", window=CDF_WINDOW):
    """sup over sites in ``window`` of |F_t(s) - F(s + delta/2)| (midpoint)
    or |F_t(s) - F(s)| (none)."""
    if shift_mode not in ("midpoint", "none"):
        raise ValueError("shift_mode must be 'midpoint' or 'none'")
    lo, hi = window
    sites = dist.grid.points(lo - 1e-12, hi)
    if len(sites) == 0:
        return 0.0
    shift = 0.5 * dist.delta if shift_mode == "midpoint" else 0.0
    emp = dist.cdf(sites)
    ref = np.array([law_cdf(law, s + shift) for s in sites])
    return float(np.max(np.abs(emp - ref)))


def density_points(dist):
    """(s, p_t(s)) pairs for plotting against the law density."""
    return list(zip(dist.sites.tolist(), dist.density().tolist()))


def table_report(dist, law):
    """Empirical vs law moments in the layout of a four-column table."""
    emp, ses = moments(dist)
    ref = law_moments(law)
    names = ("mean", "variance", "skewness", "kurtosis")
    rows = []
    for name, e, se, r in zip(names, emp, ses, ref):
        rows.append({
            "quantity": name,
            "empirical": e,
            "standard_error": se,
            "law": r,
            "relative_error": (e - r) / abs(r) if r != 0 else math.nan,
        })
    return {"law": law.kind, "count": dist.count, "delta": dist.delta, "rows": rows}


def table_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "empirical", "standard_error", "law", "relative_error"])
    for r in report["rows"]:
        w.writerow([r["quantity"], repr(r["empirical"]), repr(r["standard_error"]),
                    repr(r["law"]), repr(r["relative_error"])])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# multi-time fit


@dataclass
class FitReport:
    v_inf: float
    Gamma: float
    a_hat: float
    variance_slope: float
    max_cdf_gap: Optional[float]
    cdf_shift: Optional[float]
    moment_table: Optional[dict]
    standard_errors: dict
    times: list

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _oriented_heights(t, item):
    """Accept raw arrays (already heights) or RunBatch objects (particle
    positions become h = -(x - reference))."""
    from .simulate import RunBatch

    if isinstance(item, RunBatch):
        cfg = item.config
        x = item.samples.astype(float)
        if cfg.model in ("png_droplet", "png_flat"):
            return x
        ref = -2.0 * cfg.n if cfg.model == "tasep_alt" else 0.0
        return -(x - ref)
    return np.asarray(item, dtype=float)


def _fit_core(times, means, variances, e_zeta, var_zeta):
    t = np.asarray(times, dtype=float)
    m = np.asarray(means, dtype=float)
    v = np.asarray(variances, dtype=float)
    # (1) velocity: finite differences against 3 (t2^{1/3}-t1^{1/3})/(t2-t1)
    d = np.diff(m) / np.diff(t)
    x = 3.0 * np.diff(np.cbrt(t)) / np.diff(t)
    if len(d) == 1:
        v_inf = float(d[0])  # no slope information; use the raw difference
    else:
        slope, v_inf = np.polyfit(x, d, 1)
        v_inf = float(v_inf)
    # (2) fluctuation exponent and Gamma
    var_slope = float(np.polyfit(np.log(t), np.log(v), 1)[0])
    log_g23 = float(np.mean(np.log(v) - 2.0 / 3.0 * np.log(t) - math.log(var_zeta)))
    gamma = math.exp(1.5 * log_g23)
    # (3) shift: <h~> - E zeta ~ a (Gamma t)^{-1/3}
    scale = np.cbrt(gamma * t)
    y = (m - v_inf * t) / scale - e_zeta
    xa = 1.0 / scale
    a_hat = float(np.sum(xa * y) / np.sum(xa * xa))
    return v_inf, gamma, a_hat, var_slope


def fit_protocol(batches, epsilon=1.0, law=None, window=CDF_WINDOW):
    """Estimate (v_inf, Gamma, a) from samples at three or more times.

    batches: list of (t, samples) with samples raw heights, or RunBatch
    objects (their configured time is used).
    Standard errors come from a 100-block jackknife applied jointly to all
    times. When ``law`` is given, the largest time is also compared with
    F(s + eps/(2 (Gamma t)^{1/3})) on the lattice of spacing
    eps/(Gamma t)^{1/3}.
    """
    from .simulate import RunBatch

    batches = [(b.config.t, b) if isinstance(b, RunBatch) else b for b in batches]
    if len({float(t) for t, _ in batches}) < 3:
        raise ValueError("the fit needs at least three distinct times")
    law = law if law is not None else LimitLaw("gue")
    e_zeta, var_zeta = law_moments(law, 2)
    pairs = sorted(((float(t), _oriented_heights(t, s)) for t, s in batches), key=lambda p: p[0])
    times = [p[0] for p in pairs]
    data = [p[1] for p in pairs]
    means = [float(np.mean(h)) for h in data]
    variances = [float(np.var(h)) for h in data]
    v_inf, gamma, a_hat, var_slope = _fit_core(times, means, variances, e_zeta, var_zeta)
    if abs(var_slope - 2.0 / 3.0) > 0.05:
        warnings.warn(f"variance exponent {var_slope:.3f} is not within 0.05 of 2/3",
                      RuntimeWarning, stacklevel=2)

    # joint block jackknife
    b = JACKKNIFE_BLOCKS
    reps = []
    edges = [np.linspace(0, len(h), b + 1).astype(int) for h in data]
    for i in range(b):
        mm, vv = [], []
        for h, e in zip(data, edges):
            keep = np.concatenate([h[: e[i]], h[e[i + 1]:]])
            mm.append(float(np.mean(keep)))
            vv.append(float(np.var(keep)))
        reps.append(_fit_core(times, mm, vv, e_zeta, var_zeta))
    reps = np.asarray(reps)
    ses = np.sqrt((b - 1) / b * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))

    # lattice CDF comparison at the largest time
    t_last, h_last = times[-1], data[-1]
    scale = (gamma * t_last) ** (1.0 / 3.0)
    delta = epsilon / scale
    s = (h_last - v_inf * t_last - a_hat) / scale
    anchor = float((0.0 - v_inf * t_last - a_hat) / scale) % delta
    grid = LatticeGrid(delta, anchor)
    k = np.rint((s - anchor) / delta).astype(np.int64)
    ks, counts = np.unique(k, return_counts=True)
    dist = LatticeDistribution(grid, anchor + delta * ks, counts / counts.sum(), float(len(s)), s)
    gap = compare_cdf(dist, law, "midpoint", window)
    return FitReport(
        v_inf=v_inf,
        Gamma=gamma,
        a_hat=a_hat,
        variance_slope=var_slope,
        max_cdf_gap=gap,
        cdf_shift=0.5 * delta,
        moment_table=table_report(dist, law) if len(s) >= 100 else None,
        standard_errors={"v_inf": float(ses[0]), "Gamma": float(ses[1]), "a_hat": float(ses[2]),
                         "variance_slope": float(ses[3])},
        times=times,
    )
