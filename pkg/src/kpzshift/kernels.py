"""Airy kernels, prelimit model kernels and their first-order corrections.

Prelimit kernels live on integer coordinates u. Each family maps the
rescaled variable s to u by an affine map

    heights:    u = base + s/delta + a
    particles:  u = base - s/delta - a

and the rescaled kernel is delta^{-1} times the (conjugated) prelimit
kernel. With the natural shift a the rescaled kernel equals the limiting
kernel up to delta * (first-order kernel) + O(delta^2).
"""

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import integrate, special

from .errors import AccuracyError, RangeError
from .specfun import airy_ai, airy_ai_deriv, bessel_j, bessel_j_table

LIMIT_FAMILIES = ("airy2", "airy1")
PRELIMIT_FAMILIES = ("flat_png", "png_droplet", "tasep_flat", "tasep_step")
CORRECTION_FAMILIES = ("asym_flat", "asym_step")
FAMILIES = LIMIT_FAMILIES + PRELIMIT_FAMILIES + CORRECTION_FAMILIES

DEFAULT_SHIFT = {"flat_png": 0.0, "png_droplet": 0.5, "tasep_flat": 0.5, "tasep_step": 0.5}
LIMIT_OF = {"flat_png": "airy1", "png_droplet": "airy2", "tasep_flat": "airy1", "tasep_step": "airy2"}

K2_MIN, K2_MAX = -15.0, 40.0
MAX_NODES = 1 << 16


@dataclass(frozen=True)
class KernelModel:
    """A kernel family and its parameters.

    For tasep_step either ``n`` or ``sigma`` may be given; sigma is then
    replaced by n/t with n = round(sigma t), so that the scaling always uses
    the exact density of the tagged particle. tasep_flat depends on n only
    through 2n + x and n defaults to 0.
    """

    family: str
    t: Optional[float] = None
    sigma: Optional[float] = None
    a: Optional[float] = None
    n: Optional[int] = None
    quadrature: int = 2048

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family in PRELIMIT_FAMILIES:
            if self.t is None or self.t <= 0:
                raise ValueError(f"{self.family} needs t > 0")
            if self.a is None:
                object.__setattr__(self, "a", DEFAULT_SHIFT[self.family])
        if self.family == "tasep_step":
            if self.n is None:
                if self.sigma is None:
                    raise ValueError("tasep_step needs sigma or n")
                object.__setattr__(self, "n", int(round(self.sigma * self.t)))
            if not 0 < self.n < self.t:
                raise ValueError("tasep_step needs 0 < n < t")
            object.__setattr__(self, "sigma", self.n / self.t)
        if self.family == "tasep_flat" and self.n is None:
            object.__setattr__(self, "n", 0)
        if self.family == "asym_step":
            if self.sigma is None or not 0 < self.sigma < 1:
                raise ValueError("asym_step needs sigma in (0, 1)")

    @property
    def limit(self):
        return LIMIT_OF[self.family]

    # -- lattice ------------------------------------------------------------

    @property
    def _geom(self):
        """(base, sign, delta) of the affine map s -> u."""
        t = float(self.t)
        f = self.family
        if f == "flat_png":
            return 2.0 * t, 1.0, (2.0 * t) ** (-1.0 / 3.0)
        if f == "png_droplet":
            return 2.0 * t, 1.0, t ** (-1.0 / 3.0)
        if f == "tasep_flat":
            # u is the exponent m = 2n + X
            return 0.5 * t, -1.0, t ** (-1.0 / 3.0)
        if f == "tasep_step":
            rs = math.sqrt(self.sigma)
            c1 = 1.0 - 2.0 * rs
            c2 = self.sigma ** (-1.0 / 6.0) * (1.0 - rs) ** (2.0 / 3.0)
            return c1 * t, -1.0, 1.0 / (c2 * t ** (1.0 / 3.0))
        raise ValueError(f"{f} has no lattice")

    @property
    def delta(self):
        return self._geom[2]

    def u_of_s(self, s):
        base, sign, delta = self._geom
        return base + sign * np.asarray(s, dtype=float) / delta + sign * self.a

    def s_of_u(self, u):
        base, sign, delta = self._geom
        return sign * (np.asarray(u, dtype=float) - base - sign * self.a) * delta

    def snap(self, s):
        """Nearest lattice points to s."""
        return self.s_of_u(np.rint(self.u_of_s(s)))

    def lattice_index(self, s, tol=1e-6):
        u = self.u_of_s(s)
        ui = np.rint(u)
        if np.any(np.abs(u - ui) > tol):
            raise RangeError("point is not on the lattice I_t of this kernel")
        return ui.astype(np.int64)


# ---------------------------------------------------------------------------
# limiting kernels


def _check_window(*xs, lo=K2_MIN, hi=K2_MAX):
    for x in xs:
        x = np.asarray(x)
        if np.any(x < lo) or np.any(x > hi):
            raise RangeError(f"kernel argument outside [{lo}, {hi}]")


def k_airy2(x, y):
    """Airy-2 kernel int_0^inf Ai(x+l) Ai(y+l) dl in closed form.

    Off the diagonal (Ai(x)Ai'(y) - Ai'(x)Ai(y))/(x - y). For |x - y| < 1e-4
    the expansion around the midpoint m is used,
        K(m+d, m-d) = Ai'(m)^2 - m Ai(m)^2
                      + d^2 (2/3 m Ai'^2 - 2/3 m^2 Ai^2 + 1/3 Ai Ai') + O(d^4).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_window(x, y)
    x, y = np.broadcast_arrays(x, y)
    ax, apx, _, _ = special.airy(x)
    ay, apy, _, _ = special.airy(y)
    diff = x - y
    near = np.abs(diff) < 1e-4
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (ax * apy - apx * ay) / diff
    if np.any(near):
        m = 0.5 * (x + y)[near]
        d = 0.5 * diff[near]
        am, apm, _, _ = special.airy(m)
        diag = apm ** 2 - m * am ** 2
        curv = 2.0 / 3.0 * m * apm ** 2 - 2.0 / 3.0 * m * m * am ** 2 + am * apm / 3.0
        out = np.array(out, dtype=float)
        out[near] = diag + d * d * curv
    return float(out) if out.ndim == 0 else out


def k_airy2_integral(x, y):
    """Reference route: the defining lambda-integral by adaptive quadrature."""
    f = lambda lam: airy_ai(x + lam) * airy_ai(y + lam)
    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-15, epsrel=1e-13, limit=400)
    return val


def k_airy1(x, y):
    """Airy-1 kernel Ai(x + y)."""
    return airy_ai(np.asarray(x, dtype=float) + np.asarray(y, dtype=float))


def k_limit(kind, x, y):
    if kind == "airy2":
        return k_airy2(x, y)
    if kind == "airy1":
        return k_airy1(x, y)
    raise ValueError(f"{kind} is not a limiting kernel")


def airy_shift_combo(kind, s1, s2):
    """(d/ds1 + d/ds2) K: -Ai(s1)Ai(s2) for airy2, 2 Ai'(s1+s2) for airy1."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if kind == "airy2":
        return airy_ai(s1) * -airy_ai(s2)
    if kind == "airy1":
        return 2.0 * airy_ai_deriv(s1 + s2, 1)
    raise ValueError(f"{kind} is not a limiting kernel")


# ---------------------------------------------------------------------------
# correction kernels


def _p0_integral(s1, s2, nodes=120, length=40.0):
    """P0(s1,s2) = 1/2 int_0^inf Ai(s1+l) [Ai'(s2+l) + s2 Ai''(s2+l)] dl."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    lam = 0.5 * length * (x + 1.0)
    w = 0.5 * length * w
    a1 = special.airy(s1 + lam)[0]
    a2, ap2, _, _ = special.airy(s2 + lam)
    return 0.5 * np.sum(w * a1 * (ap2 + s2 * (s2 + lam) * a2))


def _p_integral(s1, s2, sigma, nodes=120, length=40.0):
    """P(s1,s2) with the fourth derivative kept as x^2 Ai + 2 Ai'.

    P = 1/2 int Ai(s1+l)[Ai'(s2+l) + s2 Ai''(s2+l) + kappa Ai''''(s2+l)] dl,
    kappa = (1 - 2 sqrt(sigma))/(2 sqrt(sigma)).
    """
    rs = math.sqrt(sigma)
    kappa = (1.0 - 2.0 * rs) / (2.0 * rs)
    x, w = np.polynomial.legendre.leggauss(nodes)
    lam = 0.5 * length * (x + 1.0)
    w = 0.5 * length * w
    a1 = special.airy(s1 + lam)[0]
    z = s2 + lam
    a2, ap2, _, _ = special.airy(z)
    d4 = z * z * a2 + 2.0 * ap2
    return 0.5 * np.sum(w * a1 * (ap2 + s2 * z * a2 + kappa * d4))


def asym_step_quadrature(s1, s2, sigma):
    """P(s1,s2) - P(s2,s1) by direct lambda-quadrature."""
    return _p_integral(s1, s2, sigma) - _p_integral(s2, s1, sigma)


def k_correction(model, s1, s2):
    """First-order antisymmetric kernels.

    asym_flat: 1/2 (s2^2 - s1^2) Ai(s1 + s2).
    asym_step: P - P^T. The Ai'''' block antisymmetrizes to the same kernel
    as the (Ai' + s2 Ai'') block, so P - P^T = (P0 - P0^T)/(2 sqrt(sigma)).
    """
    fam = model.family if isinstance(model, KernelModel) else str(model)
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if fam == "asym_flat":
        return 0.5 * (s2 ** 2 - s1 ** 2) * airy_ai(s1 + s2)
    if fam == "asym_step":
        sigma = model.sigma
        s1b, s2b = np.broadcast_arrays(s1, s2)
        out = np.empty(s1b.shape)
        for idx in np.ndindex(s1b.shape):
            a, b = float(s1b[idx]), float(s2b[idx])
            out[idx] = (_p0_integral(a, b) - _p0_integral(b, a)) / (2.0 * math.sqrt(sigma))
        return float(out) if out.ndim == 0 else out
    raise ValueError("k_correction is defined for asym_flat and asym_step")


def first_order_kernel(model, s1, s2):
    """K1 with k_rescaled = k_limit + delta * K1 + O(delta^2) for a prelimit
    family at its shift a.

    Moving the shift by da moves both arguments by da*delta, which adds
    da * (d1 + d2) K_limit; the natural shift removes the symmetric part.
    """
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    f = model.family
    a = model.a
    if f == "flat_png":
        return a * airy_shift_combo("airy1", s1, s2)
    if f == "png_droplet":
        return (a - 0.5) * airy_shift_combo("airy2", s1, s2)
    if f == "tasep_flat":
        return k_correction("asym_flat", s1, s2) + (a - 0.5) * airy_shift_combo("airy1", s1, s2)
    if f == "tasep_step":
        asym = KernelModel("asym_step", sigma=model.sigma)
        return k_correction(asym, s1, s2) + (a - 0.5) * airy_shift_combo("airy2", s1, s2)
    raise ValueError(f"{f} is not a prelimit family")


# ---------------------------------------------------------------------------
# prelimit kernels on integer coordinates (conjugated, unscaled)


def _flat_png_conj(t, u1, u2):
    """J_{u1+u2}(4t)."""
    k = (u1[:, None] + u2[None, :]).astype(np.int64)
    kmax = int(np.max(np.abs(k)))
    tab = bessel_j_table(4.0 * t, kmax)
    out = tab[np.abs(k)]
    neg = (k < 0) & (np.abs(k) % 2 == 1)
    out[neg] = -out[neg]
    return out, 0


def _droplet_conj(t, u1, u2):
    """sum_{l>=0} J_{u1+l}(2t) J_{u2+l}(2t) as a product of Bessel blocks."""
    x = 2.0 * t
    umin = int(min(u1.min(), u2.min()))
    umax = int(max(u1.max(), u2.max()))
    # beyond the turning point J_k(x) decays superexponentially; stop where
    # it is far below 1e-16
    top = int(math.ceil(x + 40.0 * max(x, 1.0) ** (1.0 / 3.0) + 60))
    length = max(top - umin, 1)
    tab = bessel_j_table(x, umax + length)
    k = np.arange(length)

    def block(u):
        idx = u[:, None].astype(np.int64) + k[None, :]
        vals = tab[np.abs(idx)]
        neg = (idx < 0) & (np.abs(idx) % 2 == 1)
        vals[neg] = -vals[neg]
        return vals

    return block(u1) @ block(u2).T, 0


def _tasep_flat_conj(t, m1, m2, nodes):
    """2^{m2-m1} K with K = -(1/2 pi i) oint_{|z-1|=1/2} e^{t(1-2z)} z^{m2}/(1-z)^{m1+1} dz.

    On the circle |2(1-z)| = 1 and the normalized integrand
    exp(t(1-2z) + m2 log 2z - (m1+1) log 2(1-z)) * 2 is O(1).
    """
    theta = 2 * np.pi * (np.arange(nodes) + 0.5) / nodes
    e = np.exp(1j * theta)
    z = 1.0 + 0.5 * e
    dz = 0.5j * e * (2 * np.pi / nodes)
    log2z = np.log(2.0 * z)
    log2w = np.log(-0.5 * e * 2.0)  # log 2(1 - z)
    left = np.exp(-np.outer(m1 + 1.0, log2w))
    right = np.exp(t * (1.0 - 2.0 * z)[:, None] + np.outer(log2z, m2)) * (2.0 * dz)[:, None]
    val = -(left @ right) / (2j * np.pi)
    return val.real, 0


def _tasep_step_conj(t, n, x1, x2, nodes):
    """(1 - sqrt(sigma))^{x1 - x2} K for the step-initial-data kernel

    K = (2 pi i)^{-2} oint_{Gamma_0} dz oint_{Gamma_1} dw
        e^{tz - tw} ((1-z)/(1-w))^n w^{n+x2} / z^{n+x1+1} / (z - w).

    Gamma_0: |z| = xi - eps, Gamma_1: |w - 1| = sqrt(sigma) - eps with
    xi = 1 - sqrt(sigma) the double critical point; all factors are
    normalized at xi. The 1/(z-w) coupling makes the double integral a
    product F C G^T with a Cauchy matrix C.
    """
    sigma = n / t
    rs = math.sqrt(sigma)
    xi = 1.0 - rs
    eps = min(0.5 * t ** (-1.0 / 3.0), 0.25 * min(xi, rs))
    theta = 2 * np.pi * (np.arange(nodes) + 0.5) / nodes
    e = np.exp(1j * theta)
    rz = xi - eps
    rw = rs - eps
    z = rz * e
    w = 1.0 - rw * e
    dz = 1j * z * (2 * np.pi / nodes)
    dw = -1j * rw * e * (2 * np.pi / nodes)
    logxi = math.log(xi)
    log1mxi = math.log(1.0 - xi)
    base_z = t * (z - xi) + n * (np.log(1.0 - z) - log1mxi) - (n + 1) * (np.log(z) - logxi)
    base_w = -t * (w - xi) - n * (np.log(1.0 - w) - log1mxi) + n * (np.log(w) - logxi)
    fz = np.exp(base_z[None, :] - np.outer(x1, np.log(z) - logxi)) * dz[None, :]
    gw = np.exp(base_w[None, :] + np.outer(x2, np.log(w) - logxi)) * dw[None, :]
    cauchy = 1.0 / (z[:, None] - w[None, :])
    val = (fz @ cauchy @ gw.T) / (2j * np.pi) ** 2
    # normalization leaves a factor xi^{x1 - x2 + 1}; drop the extra xi
    return (val / xi).real, 0


def _conj_matrix(model, u1, u2, nodes):
    f = model.family
    t = float(model.t)
    if f == "flat_png":
        return _flat_png_conj(t, u1, u2)[0]
    if f == "png_droplet":
        return _droplet_conj(t, u1, u2)[0]
    if f == "tasep_flat":
        return _tasep_flat_conj(t, u1.astype(float), u2.astype(float), nodes)[0]
    if f == "tasep_step":
        n = model.n
        return _tasep_step_conj(t, n, u1.astype(float), u2.astype(float), nodes)[0]
    raise ValueError(f"{f} is not a prelimit family")


def _converged_matrix(model, u1, u2):
    """Contour families: double the node count until two successive
    evaluations agree to 1e-9 (relative to the largest entry)."""
    if model.family in ("flat_png", "png_droplet"):
        return _conj_matrix(model, u1, u2, 0)
    nodes = max(16, int(model.quadrature))
    prev = _conj_matrix(model, u1, u2, nodes)
    while True:
        nodes *= 2
        cur = _conj_matrix(model, u1, u2, nodes)
        scale = max(1.0, float(np.max(np.abs(cur))))
        err = float(np.max(np.abs(cur - prev))) / scale
        if err <= 1e-9:
            return cur
        if nodes >= MAX_NODES:
            raise AccuracyError(f"contour quadrature did not converge (change {err:.2e})")
        prev = cur


def _raw_factor(model, u1, u2):
    """Factor undoing the conjugation: raw = factor * conjugated."""
    f = model.family
    if f == "tasep_flat":
        return 2.0 ** (u1[:, None] - u2[None, :])
    if f == "tasep_step":
        xi = 1.0 - math.sqrt(model.sigma)
        return xi ** (u2[None, :] - u1[:, None])
    return 1.0


def k_prelimit(model, x1, x2, nodes=None):
    """Prelimit kernel K_t(x1, x2) at integer coordinates.

    flat_png: J_{x1+x2}(4t); png_droplet: sum_l J_{x1+l}(2t) J_{x2+l}(2t);
    tasep_flat and tasep_step: contour integrals with x the particle
    position (the tagged index n is taken from the model). With ``nodes``
    the contour rule is evaluated once at that node count.
    """
    f = model.family
    if f == "flat_png" and np.ndim(x1) == 0 and np.ndim(x2) == 0:
        return bessel_j(int(x1) + int(x2), 4.0 * float(model.t))
    u1 = np.atleast_1d(np.asarray(x1, dtype=np.int64))
    u2 = np.atleast_1d(np.asarray(x2, dtype=np.int64))
    if f == "tasep_flat":
        u1 = u1 + 2 * model.n
        u2 = u2 + 2 * model.n
    if nodes is None:
        conj = _converged_matrix(model, u1, u2)
    else:
        conj = _conj_matrix(model, u1, u2, int(nodes))
    raw = conj * _raw_factor(model, u1.astype(float), u2.astype(float))
    if np.ndim(x1) == 0 and np.ndim(x2) == 0:
        return float(raw[0, 0])
    return raw


def k_rescaled_matrix(model, s1, s2=None):
    """Matrix of rescaled kernel values delta^{-1} K_conj(u(s1_i), u(s2_j))."""
    s1 = np.atleast_1d(np.asarray(s1, dtype=float))
    s2 = s1 if s2 is None else np.atleast_1d(np.asarray(s2, dtype=float))
    u1 = model.lattice_index(s1)
    u2 = model.lattice_index(s2)
    return _converged_matrix(model, u1, u2) / model.delta


def k_rescaled(model, s1, s2):
    """Rescaled prelimit kernel at lattice points s1, s2 of I_t."""
    val = k_rescaled_matrix(model, s1, s2)
    if np.ndim(s1) == 0 and np.ndim(s2) == 0:
        return float(val[0, 0])
    return val


def kernel_matrix(model, s1, s2=None):
    """Kernel values on a grid for any family (used by the determinants and
    the CLI dump)."""
    s1 = np.atleast_1d(np.asarray(s1, dtype=float))
    s2 = s1 if s2 is None else np.atleast_1d(np.asarray(s2, dtype=float))
    f = model.family
    if f in LIMIT_FAMILIES:
        return k_limit(f, s1[:, None], s2[None, :])
    if f in CORRECTION_FAMILIES:
        return np.asarray(k_correction(model, s1[:, None], s2[None, :]), dtype=float)
    return k_rescaled_matrix(model, s1, s2)


def finite_difference_combo(kernel, s1, s2, h=1e-5):
    """(d1 + d2) K by centered differences with one Richardson level."""
    def d(step):
        return (kernel(s1 + step, s2 + step) - kernel(s1 - step, s2 - step)) / (2 * step)
    return (4.0 * d(h / 2) - d(h)) / 3.0
