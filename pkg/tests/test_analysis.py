import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from kpzshift.analysis import (FitReport, LatticeDistribution, compare_cdf, fit_protocol,
                               jackknife, make_distribution, moments, raw_moment,
                               rescale, table_csv, table_report)
from kpzshift.fredholm import LatticeGrid, LimitLaw, law_cdf, law_pdf, law_sample
from kpzshift.shifts import scaling_constants
from kpzshift.simulate import SimConfig, batch

SEED = 2026
GUE = LimitLaw("gue")


def _normal_raw(mu, m):
    return [mu, mu ** 2 + 1, mu ** 3 + 3 * mu, mu ** 4 + 6 * mu ** 2 + 3][m - 1]


def _synthetic_lattice(delta, mu=0.3):
    # exact lattice law with F_t(s) = Phi(s + delta/2 - mu)
    grid = LatticeGrid(delta, 0.0)
    return LatticeDistribution.from_cdf(grid, lambda s: stats.norm.cdf(s + delta / 2 - mu), -12, 12)


def test_point_mass():
    c = scaling_constants("tasep_step", sigma=0.25)
    d = make_distribution(np.full(500, -40), c, 100.0)
    assert len(d.sites) == 1 and d.mass[0] == 1.0
    (mean, var, skew, kurt), ses = moments(d)
    assert var == 0.0 and skew == 0.0 and kurt == 0.0
    assert abs(mean - rescale(np.array([-40]), c, 100.0)[0]) < 1e-12


def test_support_on_lattice():
    c = scaling_constants("tasep_step", sigma=0.25)
    x = batch(SimConfig("tasep_step", 100.0, runs=2000, seed=SEED, n=25)).samples
    d = make_distribution(x, c, 100.0)
    assert abs(np.sum(d.mass) - 1.0) < 1e-12
    delta = c.delta_t(100.0)
    assert abs(d.delta - delta) < 1e-15
    k = (d.sites - d.grid.anchor) / delta
    assert np.max(np.abs(k - np.rint(k))) < 1e-9
    # samples land exactly on sites, not rounded onto them
    k_samples = (d.values - d.grid.anchor) / delta
    assert np.max(np.abs(k_samples - np.rint(k_samples))) < 1e-9
    assert abs(np.sum(d.density()) * delta - 1.0) < 1e-12


def test_cdf_right_continuous():
    d = _synthetic_lattice(0.2)
    s = d.sites[60]
    assert d.cdf(s) - d.cdf(s - 1e-6) == pytest.approx(d.mass[60], abs=1e-15)
    assert d.cdf(s + 0.1) == d.cdf(s)


def test_lattice_mean_exponentially_accurate():
    # the mean of the midpoint-centered lattice law is exact up to
    # exponentially small Poisson-summation terms
    for delta in (0.2, 0.1):
        d = _synthetic_lattice(delta)
        assert abs(raw_moment(d, 1) - 0.3) < 1e-12


@pytest.mark.parametrize("m", [2, 3, 4])
def test_lattice_moments_second_order(m):
    e = [abs(raw_moment(_synthetic_lattice(delta), m) - _normal_raw(0.3, m)) for delta in (0.2, 0.1)]
    assert 3.5 <= e[0] / e[1] <= 4.5


def test_lattice_variance_sheppard():
    # Var of the lattice law exceeds the continuous one by delta^2/12
    for delta in (0.2, 0.1):
        (_, var, _, _), _ = moments(_synthetic_lattice(delta))
        assert abs(var - 1.0 - delta ** 2 / 12) < 1e-10


@given(st.floats(0.05, 0.5), st.floats(-1.0, 1.0))
@settings(max_examples=25, deadline=None)
def test_lattice_law_normalized(delta, mu):
    d = _synthetic_lattice(delta, mu)
    assert abs(np.sum(d.mass) - 1.0) < 1e-12 and np.all(d.mass >= 0)


def test_law_sampled_cdf_gap():
    rng = np.random.default_rng(SEED)
    delta, n = 0.2, 1_000_000
    # continuous samples from the law, binned up by ceil onto the lattice so
    # that F_t(s) = F(s + delta/2) on the lattice anchored at delta/2
    z = law_sample(GUE, n, rng)
    grid = LatticeGrid(delta, 0.0)
    k = np.ceil(z / delta - 0.5)
    sites, counts = np.unique(k, return_counts=True)
    d = LatticeDistribution(grid, delta * sites, counts / n, float(n))
    dkw = math.sqrt(math.log(2 / 0.01) / (2 * n))
    assert compare_cdf(d, GUE, "midpoint") <= max(3 * dkw, 2 * delta ** 2)


def test_single_sample_gap():
    c = scaling_constants("tasep_step", sigma=0.25)
    d = make_distribution(np.array([200]), c, 100.0)
    # all the mass sits far left of the window, so F_t = 1 throughout it
    assert d.sites[0] < -8.0
    gap = compare_cdf(d, GUE, "midpoint", window=(-8.0, 6.0))
    assert gap > 0.99


def test_moments_need_100_samples():
    c = scaling_constants("png_droplet")
    with pytest.raises(ValueError):
        moments(make_distribution(np.arange(99), c, 10.0))
    moments(make_distribution(np.arange(100), c, 10.0))


def test_jackknife_mean_matches_standard_error():
    x = np.random.default_rng(SEED).standard_normal(20_000)
    se = jackknife(x, lambda v: np.array([np.mean(v)]))[0]
    # 100 blocks leave a relative sampling error of about 1/sqrt(198)
    assert abs(se / (np.std(x) / math.sqrt(len(x))) - 1.0) < 0.25


def test_midpoint_dominance_repeated():
    # for samples drawn from the exact lattice law the midpoint-shifted
    # comparison beats the unshifted one in nearly every repetition
    delta, n = 0.1, 1_000_000
    grid = LatticeGrid(delta, 0.0)
    exact = LatticeDistribution.from_cdf(grid, lambda s: law_cdf(GUE, s + delta / 2), -9, 7)
    window = grid.points(-4.0 - 1e-12, 2.0)
    mid = np.array([law_cdf(GUE, s + delta / 2) for s in window])
    raw = np.array([law_cdf(GUE, s) for s in window])
    rng = np.random.default_rng(SEED)
    wins = 0
    for _ in range(100):
        counts = rng.multinomial(n, exact.mass)
        d = LatticeDistribution(grid, exact.sites, counts / n, float(n))
        emp = d.cdf(window)
        wins += np.max(np.abs(emp - mid)) < np.max(np.abs(emp - raw))
    assert wins >= 95


def _density_gap(dist, lo=-3.0, hi=1.0):
    keep = (dist.sites >= lo) & (dist.sites <= hi)
    return float(np.max(np.abs(dist.density()[keep] - law_pdf(GUE, dist.sites[keep]))))


def test_exact_lattice_density_second_order():
    # midpoint-binned law: mass/delta = F'(s) + delta^2 F'''(s)/24 + ...
    gaps = []
    for delta in (0.1, 0.05):
        exact = LatticeDistribution.from_cdf(LatticeGrid(delta, 0.0),
                                             lambda s: law_cdf(GUE, s + delta / 2), -9, 7)
        gaps.append(_density_gap(exact))
    assert 3.5 <= gaps[0] / gaps[1] <= 4.5


def test_sampled_density_gap_within_noise():
    rng = np.random.default_rng(SEED)
    n = 1_000_000
    z = law_sample(GUE, n, rng)
    for delta in (0.1, 0.05):
        k = np.ceil(z / delta - 0.5)
        sites, counts = np.unique(k, return_counts=True)
        d = LatticeDistribution(LatticeGrid(delta, 0.0), delta * sites, counts / n, float(n))
        # binomial noise of mass/delta at the density peak (~0.43)
        noise = math.sqrt(0.43 / (n * delta))
        assert _density_gap(d) <= 0.01 * delta ** 2 + 5 * noise


@pytest.mark.slow
def test_step_density_natural_shift_beats_zero_shift():
    x = batch(SimConfig("tasep_step", 100.0, runs=100_000, seed=SEED, n=25)).samples
    natural = make_distribution(x, scaling_constants("tasep_step", sigma=0.25), 100.0)
    zero = make_distribution(x, scaling_constants("tasep_step", sigma=0.25, a=0.0), 100.0)
    assert _density_gap(natural) < _density_gap(zero)


def test_table_report_round_trip():
    c = scaling_constants("png_droplet")
    x = batch(SimConfig("png_droplet", 10.0, runs=2000, seed=SEED)).samples
    rep = table_report(make_distribution(x, c, 10.0), GUE)
    assert [r["quantity"] for r in rep["rows"]] == ["mean", "variance", "skewness", "kurtosis"]
    lines = table_csv(rep).strip().splitlines()
    assert lines[0] == "quantity,empirical,standard_error,law,relative_error" and len(lines) == 5
    assert float(lines[1].split(",")[1]) == rep["rows"][0]["empirical"]
    json.dumps(rep)


# ---------------------------------------------------------------------------
# fit protocol


@pytest.fixture(scope="module")
def synthetic_fit():
    rng = np.random.default_rng(SEED)
    z = law_sample(GUE, 300_000, rng)
    batches = []
    for i, t in enumerate((200, 400, 800)):
        # v = 2, Gamma = 1, a = 1/2 on integer heights
        h = np.rint(2 * t + t ** (1 / 3) * z[i * 100_000:(i + 1) * 100_000] + 0.5)
        batches.append((t, h))
    return fit_protocol(batches, 1.0, GUE)


def test_fit_synthetic_velocity_gamma(synthetic_fit):
    r = synthetic_fit
    assert abs(r.v_inf - 2.0) < 0.05 * 2.0
    assert abs(r.Gamma - 1.0) < 0.05
    assert abs(r.variance_slope - 2 / 3) < 0.05


def test_fit_synthetic_shift(synthetic_fit):
    r = synthetic_fit
    se = r.standard_errors["a_hat"]
    assert 0 < se < 0.5
    assert abs(r.a_hat - 0.5) < 3 * se


def test_fit_report_json(synthetic_fit):
    data = json.loads(synthetic_fit.to_json())
    assert set(data) == set(FitReport.__dataclass_fields__)
    assert data["times"] == [200.0, 400.0, 800.0]


def test_fit_needs_three_times():
    h = np.arange(200.0)
    with pytest.raises(ValueError):
        fit_protocol([(10, h), (20, h)])
    with pytest.raises(ValueError):
        fit_protocol([(10, h), (10, h), (20, h)])


def test_fit_png_droplet_velocity():
    bs = [batch(SimConfig("png_droplet", t, runs=10_000, seed=SEED + i)) for i, t in enumerate((10, 20, 40))]
    r = fit_protocol(bs, 1.0, GUE)
    assert abs(r.v_inf - 2.0) < 0.02 * 2.0


@pytest.mark.slow
def test_fit_step_shift():
    # sigma = 1/4 needs n = t/4 integral, so t = 48 stands in for t = 50
    bs = [batch(SimConfig("tasep_step", t, runs=100_000, seed=SEED + i, n=t // 4))
          for i, t in enumerate((48, 100, 200))]
    with pytest.warns(RuntimeWarning, match="variance exponent"):
        r = fit_protocol(bs, 1.0, GUE)
    assert abs(r.v_inf) < 0.01
    assert abs(r.a_hat - 0.5) <= 0.15
