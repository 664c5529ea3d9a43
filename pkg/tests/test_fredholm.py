import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from kpzshift.errors import RangeError
from kpzshift.fredholm import (LatticeGrid, LimitLaw, det_continuum, det_lattice, law_cdf,
                               law_moments, law_pdf, lattice_matrix, midpoint_gap)
from kpzshift.kernels import KernelModel, k_airy2, k_correction

A2 = KernelModel("airy2")
A1 = KernelModel("airy1")
GUE = LimitLaw("gue")
GOE2 = LimitLaw("goe2")

# self-converged Nystrom values (40, 80 and 160 nodes agree to 1e-14)
F_GUE_0 = 0.96937282835526
F_GOE2_0 = 0.831908066202944
# maximum of the goe2 density (80 vs 160 nodes: 1e-7 in location, 1e-11 in value)
GOE2_MODE = (-0.69633157, 0.6385028963)


def lattice_gap(kernel, delta, s):
    grid = LatticeGrid(delta, anchor=s)
    return abs(det_lattice(kernel, grid, s) - det_continuum(kernel, s + delta / 2))


def test_continuum_right_tail():
    assert abs(det_continuum(A2, 8.0) - 1.0) < 1e-10


def test_continuum_golden_values():
    a = det_continuum(A2, 0.0, nodes=40)
    b = det_continuum(A2, 0.0, nodes=80)
    assert abs(a - b) <= 1e-10
    assert abs(b - F_GUE_0) < 1e-12
    assert abs(det_continuum(A1, 0.0) - F_GOE2_0) < 1e-12


@pytest.mark.parametrize("s", [-8.0, -4.0, 0.0, 3.0])
def test_continuum_self_convergence(s):
    for k in (A2, A1):
        det_continuum(k, s, check=True)


def test_continuum_nodes_precondition():
    with pytest.raises(ValueError):
        det_continuum(A2, 0.0, nodes=8)


def test_lattice_right_tail():
    assert abs(det_lattice(A2, LatticeGrid(0.2), 8.0) - 1.0) < 1e-10


def test_lattice_piecewise_constant():
    g = LatticeGrid(0.2, 0.0)
    assert det_lattice(A2, g, 0.01) == det_lattice(A2, g, 0.19)


@pytest.mark.parametrize("kernel", [A2, A1], ids=["airy2", "airy1"])
@pytest.mark.parametrize("s", [-2.0, 0.0, 2.0])
def test_lattice_gap_second_order(kernel, s):
    # halving delta quarters the midpoint gap once delta^4 terms are small
    r = lattice_gap(kernel, 0.05, s) / lattice_gap(kernel, 0.025, s)
    assert 3.5 <= r <= 4.5


@pytest.mark.parametrize("kernel", [A2, A1], ids=["airy2", "airy1"])
@pytest.mark.parametrize("s", [-2.0, -1.0, 0.0, 1.0, 2.0])
def test_midpoint_rule_dominates(kernel, s):
    d = 0.3
    grid = LatticeGrid(d, anchor=s)
    lat = det_lattice(kernel, grid, s)
    mid = abs(lat - det_continuum(kernel, s + d / 2))
    raw = abs(lat - det_continuum(kernel, s))
    assert mid * 5 < raw


def test_lattice_tasep_step_prelimit():
    t = 200.0
    m = KernelModel("tasep_step", t=t, sigma=0.25)
    grid = LatticeGrid.for_model(m)
    s = float(grid.snap(0.0))
    val = det_lattice(m, grid, s)
    assert abs(val - law_cdf(GUE, s + m.delta / 2)) <= 2 * t ** (-2 / 3)


def test_lattice_truncation_warning():
    grid = LatticeGrid(0.2)
    with pytest.warns(RuntimeWarning):
        det_lattice(A1, grid, -6.0, length=4.0)


def test_hadamard_bound():
    delta = 0.25
    grid = LatticeGrid(delta)
    pts, m = lattice_matrix(A2, grid, -1.0, length=3.0)
    c = float(np.max(np.abs(m))) / delta
    rng = np.random.default_rng(5)
    for n in range(1, 5):
        bound = c ** n * n ** (n / 2) * delta ** n
        for _ in range(200):
            idx = rng.choice(len(pts), size=n, replace=False)
            assert abs(np.linalg.det(m[np.ix_(idx, idx)])) <= bound * (1 + 1e-12)


@pytest.mark.parametrize("sym,asym", [("airy2", KernelModel("asym_step", sigma=0.25)),
                                      ("airy1", KernelModel("asym_flat"))])
def test_trace_of_antisymmetric_part_vanishes(sym, asym):
    grid = LatticeGrid(0.2)
    pts, m = lattice_matrix(KernelModel(sym), grid, -1.0, length=8.0)
    ka = grid.delta * np.asarray(k_correction(asym, pts[:, None], pts[None, :]))
    tr = np.trace(np.linalg.solve(np.eye(len(pts)) - m, ka))
    assert abs(tr) < 1e-10


@given(st.floats(0.01, 1.0), st.floats(-5, 5), st.floats(-10, 10), st.floats(0.5, 10))
@settings(max_examples=80, deadline=None)
def test_grid_points_on_lattice(delta, anchor, lo, width):
    g = LatticeGrid(delta, anchor)
    p = g.points(lo, lo + width)
    k = (p - anchor) / delta
    assert np.allclose(k, np.rint(k), atol=1e-7)
    assert np.all(p > lo) and np.all(p <= lo + width + 1e-9)
    assert np.allclose(np.diff(p), delta)


# ---------------------------------------------------------------------------
# limit laws


@pytest.mark.parametrize("law", [GUE, GOE2], ids=["gue", "goe2"])
def test_cdf_monotone_with_limits(law):
    xs = np.arange(-10.0, 10.01, 0.25)
    f = law_cdf(law, xs)
    assert np.all(np.diff(f) >= -1e-13)
    assert f[0] < 1e-12 and f[-1] > 1 - 1e-12


def test_cdf_right_end():
    assert 1 - law_cdf(GUE, 10.0) <= 1e-12


def test_pdf_normalized():
    val, _ = integrate.quad(lambda s: law_pdf(GUE, s), -10, 10, limit=200, epsabs=1e-10)
    assert abs(val - 1.0) < 1e-6


def test_law_range_error():
    with pytest.raises(RangeError):
        law_cdf(GUE, 11.0)
    with pytest.raises(RangeError):
        law_pdf(GOE2, -10.5)


def test_goe2_mode_stable():
    found = []
    for nodes in (80, 160):
        law = LimitLaw("goe2", nodes=nodes)
        r = optimize.minimize_scalar(lambda s: -law_pdf(law, s), bounds=(-1.2, -0.3),
                                     method="bounded", options={"xatol": 1e-9})
        found.append((r.x, -r.fun))
    assert abs(found[0][0] - found[1][0]) < 1e-6
    assert abs(found[0][1] - found[1][1]) < 1e-6
    assert abs(found[1][0] - GOE2_MODE[0]) < 1e-6
    assert abs(found[1][1] - GOE2_MODE[1]) < 1e-9


def test_gue_moments():
    m = law_moments(GUE)
    for got, ref in zip(m, (-1.77109, 0.8132, 0.224, 0.094)):
        assert abs(got - ref) < 2e-3


def test_goe2_moments():
    m = law_moments(GOE2)
    for got, ref in zip(m, (-0.60327, 0.4019, 0.293, 0.165)):
        assert abs(got - ref) < 2e-3


@dataclass(frozen=True)
class RankOneLaw:
    """F(s) = 1 - int_s^inf f^2 for K = f (x) f: an even density f^2."""
    kernel: Callable
    nodes: int = 80
    length: float = 30.0


def _gauss_root(x, y):
    return np.exp(-(x * x + y * y) / 4) / (2 * math.pi) ** 0.5


def test_symmetric_law_moments():
    mean, var, skew, kurt = law_moments(RankOneLaw(_gauss_root))
    assert abs(mean) < 1e-7 and abs(skew) < 1e-6
    assert abs(var - 1) < 1e-6 and abs(kurt) < 1e-5


def test_moments_order_bound():
    with pytest.raises(ValueError):
        law_moments(GUE, 5)


# ---------------------------------------------------------------------------
# midpoint rule


def test_midpoint_exponential_ratio():
    f = lambda x: math.exp(-x)  # noqa: E731
    r = midpoint_gap(f, 0.1) / midpoint_gap(f, 0.05)
    assert 3.8 <= r <= 4.2


def test_midpoint_gaussian_slope():
    f = lambda x: math.exp(-(x - 0.5) ** 2)  # noqa: E731
    ds = np.array([0.4, 0.2, 0.1, 0.05])
    gaps = np.array([midpoint_gap(f, d) for d in ds])
    slope = np.polyfit(np.log(ds), np.log(gaps), 1)[0]
    assert abs(slope - 2.0) < 0.2


def test_midpoint_zero():
    assert midpoint_gap(lambda x: 0.0, 0.1) == 0.0


def test_midpoint_dim():
    with pytest.raises(NotImplementedError):
        midpoint_gap(lambda x: 0.0, 0.1, dim=2)
