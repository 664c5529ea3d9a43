import math

import numpy as np
import pytest
from scipy import stats

from kpzshift.analysis import make_distribution, moments
from kpzshift.errors import SimulationError
from kpzshift.fredholm import LimitLaw, law_moments
from kpzshift.rng import run_key, sub_key, uniform
from kpzshift.shifts import scaling_constants
from kpzshift.simulate import (SimConfig, batch, longest_chain, pasep_run, png_direct_oracle,
                               png_height, png_step_dynamics, replica, tasep_positions,
                               tasep_run, window_check)

from .helpers import binomial_z, chi_square_two_sample

SEED = 2026
GUE_MEAN = law_moments(LimitLaw("gue"), 1)[0]


def test_rng_uniformity():
    key = run_key(np.uint64(SEED), 0)
    u = np.array([uniform(key, i) for i in range(100_000)])
    assert np.all((u > 0) & (u < 1))
    assert stats.kstest(u, "uniform").pvalue > 0.01


def test_rng_streams_differ():
    a = run_key(np.uint64(1), 0)
    assert a != run_key(np.uint64(1), 1) and a != run_key(np.uint64(2), 0)
    assert sub_key(a, 1) != sub_key(a, 2)


# ---------------------------------------------------------------------------
# configuration and batches


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig("tasep_step", 10.0)
    with pytest.raises(ValueError):
        SimConfig("png_droplet", 10.0, runs=0)
    with pytest.raises(ValueError):
        SimConfig("pasep_step", 10.0, n=3, p=0.5)
    with pytest.raises(ValueError):
        SimConfig("tasep_step", 10.0, n=3, p=0.7)
    c = SimConfig("pasep-step", 10.0, n=3, p=0.75)
    assert c.model == "pasep_step"
    assert abs(c.q - 0.25) < 1e-15 and abs(c.gamma - 0.5) < 1e-15
    assert c.horizon == 20.0


def test_initial_condition():
    key = run_key(np.uint64(0), 0)
    assert tasep_run(SimConfig("tasep_step", 0.0, n=7), key) == -7
    assert tasep_run(SimConfig("tasep_alt", 0.0, n=7), key) == -14
    assert pasep_run(SimConfig("pasep_step", 0.0, n=7, p=0.8), key) == -7


def test_batch_determinism_and_workers():
    for cfg in (SimConfig("tasep_step", 30.0, runs=200, seed=3, n=8),
                SimConfig("tasep_alt", 20.0, runs=200, seed=3, n=5),
                SimConfig("pasep_step", 10.0, runs=200, seed=3, n=4, p=0.8),
                SimConfig("png_flat", 6.0, runs=200, seed=3)):
        a = batch(cfg, workers=1).samples
        assert np.array_equal(a, batch(cfg, workers=1).samples)
        assert np.array_equal(a, batch(cfg, workers=8).samples)
        # run r of a batch is replica r
        assert a[17] == replica(cfg, 17)


def test_replica_attaches_run_index(monkeypatch):
    import kpzshift.simulate as sim

    def broken(config, key):
        raise FloatingPointError("overflow")

    monkeypatch.setattr(sim, "png_height", broken)
    with pytest.raises(SimulationError) as info:
        sim.replica(SimConfig("png_droplet", 6.0), 41)
    assert info.value.run == 41 and "overflow" in str(info.value)


# ---------------------------------------------------------------------------
# TASEP


def test_free_particle_poisson():
    cfg = SimConfig("tasep_step", 1.0, runs=100_000, seed=SEED, n=1)
    x = batch(cfg).samples
    assert abs(binomial_z(np.sum(x == -1), len(x), math.exp(-1.0))) < 3


def test_step_coupling_identity():
    # particle n only sees particles 1..n: adding ten more changes nothing
    for run in range(20):
        cfg = SimConfig("tasep_step", 40.0, n=10)
        key = run_key(np.uint64(SEED), run)
        pos = tasep_positions(cfg, key, 20)
        assert pos[9] == tasep_run(cfg, key)
        assert np.all(np.diff(pos) < 0)


def test_pasep_order_preserved():
    cfg = SimConfig("pasep_step", 15.0, n=6, p=0.7)
    for run in range(30):
        pasep_run(cfg, run_key(np.uint64(SEED), run), check_order=True)


def test_pasep_p1_matches_tasep():
    a = batch(SimConfig("pasep_step", 20.0, runs=10_000, seed=1, n=5, p=1.0)).samples
    b = batch(SimConfig("tasep_step", 20.0, runs=10_000, seed=2, n=5)).samples
    assert stats.ks_2samp(a, b).pvalue > 0.01
    assert chi_square_two_sample(a, b) > 0.01


@pytest.mark.parametrize("model,kw", [("tasep_alt", dict(n=10)), ("pasep_step", dict(n=10, p=0.75))])
def test_window_doubling(model, kw):
    base = SimConfig(model, 20.0, runs=10_000, seed=11, **kw)
    w = base.resolved_window
    wide = SimConfig(model, 20.0, runs=10_000, seed=12, window=2 * w, **kw)
    assert stats.ks_2samp(batch(base).samples, batch(wide).samples).pvalue > 0.01


def test_window_warning():
    with pytest.warns(RuntimeWarning):
        window_check(SimConfig("tasep_alt", 50.0, n=10, window=20))


@pytest.mark.slow
def test_step_mean_t100():
    cfg = SimConfig("tasep_step", 100.0, runs=100_000, seed=SEED, n=25)
    c = scaling_constants("tasep_step", sigma=0.25)
    (mean, *_), se = moments(make_distribution(batch(cfg).samples, c, 100.0))
    assert abs(mean - GUE_MEAN) <= 3 * se[0] + 0.15


# ---------------------------------------------------------------------------
# PNG


def test_void_probabilities():
    d = batch(SimConfig("png_droplet", 0.8, runs=100_000, seed=SEED)).samples
    assert abs(binomial_z(np.sum(d == 0), len(d), math.exp(-0.64))) < 3
    f = batch(SimConfig("png_flat", 0.6, runs=100_000, seed=SEED)).samples
    assert abs(binomial_z(np.sum(f == 0), len(f), math.exp(-0.72))) < 3


def test_oracle_trivial_cases():
    assert png_step_dynamics(np.array([]), np.array([]), 2.0) == 0
    assert png_step_dynamics(np.array([0.0]), np.array([1.0]), 2.0) == 1
    # two nucleations whose islands merge before t still give height 1
    assert png_step_dynamics(np.array([-0.3, 0.3]), np.array([0.1, 0.2]), 2.0) == 1
    # a nucleation on top of an island gives height 2
    assert png_step_dynamics(np.array([0.0, 0.1]), np.array([0.2, 0.9]), 2.0) == 2


def test_chain_and_dynamics_agree_pathwise():
    for model in ("png_droplet", "png_flat"):
        cfg = SimConfig(model, 3.0)
        for run in range(300):
            key = run_key(np.uint64(SEED), run)
            assert png_height(cfg, key) == png_direct_oracle(cfg, key)


@pytest.mark.parametrize("model", ["png_droplet", "png_flat"])
def test_chain_and_dynamics_same_law(model):
    cfg = SimConfig(model, 3.0, runs=4000, seed=SEED)
    rng = np.random.default_rng(SEED)
    oracle = np.array([png_direct_oracle(cfg, rng) for _ in range(cfg.runs)])
    assert chi_square_two_sample(oracle, batch(cfg).samples) > 0.01


def test_longest_chain_small():
    assert longest_chain(np.array([3.0, 1.0, 2.0, 5.0, 4.0])) == 3
    assert longest_chain(np.array([], dtype=float)) == 0


def test_oracle_scale_limit():
    with pytest.raises(ValueError):
        png_direct_oracle(SimConfig("png_droplet", 6.0), 0)


@pytest.mark.slow
def test_droplet_mean_t40():
    cfg = SimConfig("png_droplet", 40.0, runs=100_000, seed=SEED)
    c = scaling_constants("png_droplet")
    (mean, *_), se = moments(make_distribution(batch(cfg).samples, c, 40.0))
    assert abs(mean - GUE_MEAN) <= 3 * se[0] + 1.5 * c.delta_t(40.0) ** 2
