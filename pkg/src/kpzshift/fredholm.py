"""Fredholm determinants on (s, inf) and on the rescaled lattice I_t,
limit-law CDF/PDF/moments, and the midpoint-rule gap utility.
"""

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, special

from .errors import AccuracyError, RangeError
from .kernels import (LIMIT_FAMILIES, PRELIMIT_FAMILIES, KernelModel, k_airy1,
                      k_airy2, k_rescaled_matrix)

TRUNCATION = 16.0
DEFAULT_NODES = 80

Kernel = Union[KernelModel, Callable]


def _kernel_fn(kernel):
    if callable(kernel) and not isinstance(kernel, KernelModel):
        return kernel
    fam = kernel.family if isinstance(kernel, KernelModel) else str(kernel)
    if fam == "airy2":
        return k_airy2
    if fam == "airy1":
        return k_airy1
    raise ValueError(f"{fam} is not a limiting kernel")


def _node_matrix(kernel, pts):
    """Kernel on distinct quadrature nodes; the Airy kernels reuse one
    vector of Airy values."""
    fam = kernel.family if isinstance(kernel, KernelModel) else None
    if fam == "airy2" and np.min(np.diff(pts)) > 1e-4:
        a, ap, _, _ = special.airy(pts)
        diff = pts[:, None] - pts[None, :]
        np.fill_diagonal(diff, 1.0)
        mat = (a[:, None] * ap[None, :] - ap[:, None] * a[None, :]) / diff
        np.fill_diagonal(mat, ap * ap - pts * a * a)
        return mat
    return _kernel_fn(kernel)(pts[:, None], pts[None, :])


@lru_cache(maxsize=32)
def _gauss_legendre(nodes):
    x, w = np.polynomial.legendre.leggauss(nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def det_continuum(kernel, s, nodes=DEFAULT_NODES, length=TRUNCATION, check=False):
    """det(Id - K) on L^2((s, inf)) by Gauss-Legendre Nystrom discretization.

    The interval is cut at s + length; the matrix is
    Id - W^{1/2} K W^{1/2}. With ``check`` the node count is doubled once and
    an AccuracyError is raised if the two values differ by more than 1e-9.
    """
    if nodes < 16:
        raise ValueError("nodes must be at least 16")
    x, w = _gauss_legendre(int(nodes))
    pts = s + 0.5 * length * (x + 1.0)
    sw = np.sqrt(0.5 * length * w)
    mat = np.eye(len(pts)) - sw[:, None] * _node_matrix(kernel, pts) * sw[None, :]
    val = float(np.linalg.det(mat))
    if check:
        finer = det_continuum(kernel, s, 2 * nodes, length, check=False)
        if abs(finer - val) > 1e-9:
            raise AccuracyError(f"Nystrom determinant not converged at s={s}: {abs(finer - val):.2e}")
    return val


@dataclass(frozen=True)
class LatticeGrid:
    """Points anchor + delta Z inside [s_min, s_max]."""

    delta: float
    anchor: float = 0.0
    s_min: float = -math.inf
    s_max: float = math.inf

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @classmethod
    def for_model(cls, model, s_min=-math.inf, s_max=math.inf):
        """The lattice I_t of a prelimit kernel model."""
        delta = model.delta
        anchor = float(model.s_of_u(0.0)) % delta
        return cls(delta, anchor, s_min, s_max)

    def points(self, lo, hi):
        """Grid points in (lo, hi] intersected with [s_min, s_max]."""
        lo = max(lo, self.s_min - 1e-12)
        hi = min(hi, self.s_max)
        tol = 1e-9 * self.delta
        k0 = math.floor((lo - self.anchor) / self.delta + tol / self.delta) + 1
        k1 = math.floor((hi - self.anchor) / self.delta + tol / self.delta)
        pts = self.anchor + self.delta * np.arange(k0, k1 + 1)
        return pts[pts > lo + tol]

    def snap(self, s):
        return self.anchor + self.delta * np.rint((np.asarray(s, dtype=float) - self.anchor) / self.delta)


def lattice_matrix(kernel, grid, s, length=TRUNCATION):
    """(points, delta*K) on the lattice points in (s, s + length]."""
    pts = grid.points(s, s + length)
    if isinstance(kernel, KernelModel) and kernel.family in PRELIMIT_FAMILIES:
        kmat = k_rescaled_matrix(kernel, pts)
    else:
        k = _kernel_fn(kernel)
        kmat = k(pts[:, None], pts[None, :])
    return pts, grid.delta * np.asarray(kmat, dtype=float)


def det_lattice(kernel, grid, s, length=TRUNCATION):
    """det(Id - delta K) on l^2 of the lattice points in (s, s + length].

    Piecewise constant in s. A warning is issued when the kernel at the
    upper cut is not below 1e-12.
    """
    pts, m = lattice_matrix(kernel, grid, s, length)
    if len(pts) == 0:
        return 1.0
    edge = max(abs(m[-1, -1]), float(np.max(np.abs(m[-1, :]))))
    if edge > 1e-12:
        warnings.warn(f"lattice determinant truncated where kernel is still {edge:.1e}",
                      RuntimeWarning, stacklevel=2)
    return float(np.linalg.det(np.eye(len(pts)) - m))


# ---------------------------------------------------------------------------
# limit laws


@dataclass(frozen=True)
class LimitLaw:
    """GUE (airy2 kernel, F_GUE(s)) or GOE2 (airy1 kernel, F_GOE(2s))."""

    kind: str
    nodes: int = DEFAULT_NODES
    length: float = TRUNCATION

    def __post_init__(self):
        if self.kind not in ("gue", "goe2"):
            raise ValueError("law kind must be 'gue' or 'goe2'")

    @property
    def kernel(self):
        return KernelModel("airy2" if self.kind == "gue" else "airy1")


def _cdf(law, s):
    return det_continuum(law.kernel, float(s), law.nodes, law.length)


def _pdf(law, s, h=1e-4):
    def d(step):
        return (_cdf(law, s + step) - _cdf(law, s - step)) / (2.0 * step)
    return (4.0 * d(0.5 * h) - d(h)) / 3.0


def _check_s(s):
    if not -10.0 <= s <= 10.0:
        raise RangeError("law evaluated outside [-10, 10]")


def law_cdf(law, s):
    """F(s) for s in [-10, 10]; clipped to [0, 1]."""
    if np.ndim(s):
        return np.array([law_cdf(law, v) for v in np.ravel(s)]).reshape(np.shape(s))
    _check_s(s)
    return min(1.0, max(0.0, _cdf(law, s)))


def law_pdf(law, s):
    """F'(s) by a centered difference (step 1e-4) with one Richardson level."""
    if np.ndim(s):
        return np.array([law_pdf(law, v) for v in np.ravel(s)]).reshape(np.shape(s))
    _check_s(s)
    return _pdf(law, s)


@lru_cache(maxsize=16)
def _moments_cached(law, nodes, lo, hi):
    x, w = np.polynomial.legendre.leggauss(nodes)
    pts = lo + 0.5 * (hi - lo) * (x + 1.0)
    w = 0.5 * (hi - lo) * w
    dens = np.array([_pdf(law, v) for v in pts])
    mass = float(np.sum(w * dens))
    mean = float(np.sum(w * dens * pts)) / mass
    c = pts - mean
    var = float(np.sum(w * dens * c ** 2)) / mass
    m3 = float(np.sum(w * dens * c ** 3)) / mass
    m4 = float(np.sum(w * dens * c ** 4)) / mass
    return mean, var, m3 / var ** 1.5, m4 / var ** 2 - 3.0


def law_moments(law, max_order=4, nodes=120):
    """(mean, variance, skewness, excess kurtosis) by Gauss-Legendre
    quadrature of x^m F'(x) over [-12, 12]. Any hashable law object with
    ``kernel``, ``nodes`` and ``length`` attributes is accepted."""
    if not 1 <= max_order <= 4:
        raise ValueError("max_order must be between 1 and 4")
    vals = _moments_cached(law, nodes, -12.0, 12.0)
    return vals[:max_order]


def law_sample(law, size, rng, grid=None):
    """Inverse-CDF samples from a limit law (linear interpolation on a fine
    CDF table over [-9, 7])."""
    grid = np.linspace(-9.0, 7.0, 1601) if grid is None else grid
    cdf = np.maximum.accumulate(np.array([_cdf(law, v) for v in grid]))
    u = rng.random(size)
    return np.interp(u, cdf, grid)


# ---------------------------------------------------------------------------
# midpoint rule


def midpoint_gap(f, delta, dim=1, upper=60.0):
    """|delta sum_{x>=0} f(x delta) - int_{-delta/2}^inf f| (sum and integral
    cut at ``upper``)."""
    if dim != 1:
        raise NotImplementedError("only dim=1 is supported")
    xs = delta * np.arange(0, int(math.floor(upper / delta)) + 1)
    total = delta * math.fsum(np.vectorize(f, otypes=[float])(xs))
    top = xs[-1] + 0.5 * delta
    pieces = np.linspace(-0.5 * delta, top, 64)
    integral = 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        integral += integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-13)[0]
    return abs(total - integral)
