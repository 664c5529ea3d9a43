"""Shift and scaling constants.

a_pq(p) = sum_{l>=1} q^l/(p^l - q^l) is the lattice shift of PASEP with step
initial data, p_c is the asymmetry where the height shift 2 a_pq - 1
vanishes, and ``scaling_constants`` collects (c1, c2, delta_t, a, eta, sigma)
for every simulated model.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DivergenceError
from .specfun import QContext

EULER_GAMMA = 0.5772156649015329

MODELS = ("tasep_step", "tasep_alt", "pasep_step", "png_droplet", "png_flat")
_ALIASES = {
    "tasep_flat": "tasep_alt",
    "flat_png": "png_flat",
    "pasep": "pasep_step",
}

_MAX_TERMS = 1_000_000


def canonical_model(name):
    """Normalize model names: hyphens to underscores, kernel-family aliases."""
    key = str(name).strip().lower().replace("-", "_")
    key = _ALIASES.get(key, key)
    if key not in MODELS:
        raise ValueError(f"unknown model {name!r}; expected one of {', '.join(MODELS)}")
    return key


def lambert_sum(tau, rtol=1e-16, max_terms=_MAX_TERMS):
    """sum_{l>=1} tau^l / (1 - tau^l) for tau in [0, 1)."""
    if not 0.0 <= tau < 1.0:
        raise DivergenceError("series diverges for tau >= 1")
    if tau == 0.0:
        return 0.0
    # terms decay roughly like tau^l/(1-tau); predict the length first so
    # that tau -> 1 fails fast instead of looping
    need = math.log(rtol * (1.0 - tau)) / math.log(tau) if tau > 0 else 1
    if need > max_terms:
        raise DivergenceError(
            f"series needs about {need:.3g} terms at tau={tau!r} (cap {max_terms})")
    total = 0.0
    terms = []
    tl = 1.0
    for _ in range(max_terms):
        tl *= tau
        term = tl / (1.0 - tl)
        terms.append(term)
        total += term
        if term < 1e-15 * total * 1e-2:
            break
    return math.fsum(terms)


def a_pq(p):
    """PASEP shift constant sum_l q^l/(p^l - q^l), q = 1 - p."""
    p = float(p)
    if not 0.5 < p <= 1.0:
        raise DivergenceError("a_pq is defined for p in (1/2, 1]")
    if p == 1.0:
        return 0.0
    q = 1.0 - p
    # q^l/(p^l - q^l) = 1/expm1(l log(p/q)); kept separate from lambert_sum
    # so that G = a_pq is a check between two summations
    rate = math.log(p) - math.log(q)
    need = -math.log(1e-16 * (1.0 - math.exp(-rate))) / rate
    if need > _MAX_TERMS:
        raise DivergenceError(f"a_pq needs about {need:.3g} terms at p={p!r} (cap {_MAX_TERMS})")
    terms = []
    for l in range(1, _MAX_TERMS + 1):
        term = 1.0 / math.expm1(l * rate)
        terms.append(term)
        if term < 1e-17 * terms[0]:
            break
    return math.fsum(terms)


def p_critical(iterations=100):
    """Root of a_pq(p) = 1/2 by bisection (a_pq is strictly decreasing)."""
    lo, hi = 0.55, 1.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if a_pq(mid) > 0.5:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def height_shift(p):
    """Height-function shift 2 a_pq - 1."""
    return 2.0 * a_pq(p) - 1.0


def wasep_expansion(beta):
    """Small-asymmetry form of a_pq at p = (1+beta)/2:
    (gamma_E - ln(2 beta))/(2 beta) + 1/4."""
    beta = float(beta)
    if not 0.0 < beta <= 0.2:
        raise ValueError("beta must lie in (0, 0.2]")
    return (EULER_GAMMA - math.log(2.0 * beta)) / (2.0 * beta) + 0.25


def g_forms(tau, ctx: Optional[QContext] = None):
    """The two series for G:

    g_pochhammer = sum_{k>=1} (1 - (tau^k; tau)_inf)
    g_simple     = sum_{l>=1} tau^l / (1 - tau^l)

    1 - (x; tau)_inf is formed as -expm1(sum log1p(-x tau^j)) so the tail
    terms keep full relative accuracy.
    """
    if ctx is None:
        ctx = QContext(tau=tau)
    tau = ctx.tau
    g_simple = lambert_sum(tau)
    terms = []
    for k in range(1, ctx.truncation_order):
        # log (tau^k; tau)_inf, factors kept until they fall below 1e-17
        # relative to the leading one
        x0 = tau ** k
        x = x0
        parts = []
        while x > 1e-17 * x0:
            parts.append(math.log1p(-x))
            x *= tau
        term = -math.expm1(math.fsum(parts))
        terms.append(term)
        if term < ctx.tolerance * 1e-3 * terms[0]:
            break
    g_poch = math.fsum(terms)
    return g_poch, g_simple


def g_of_mu(mu, tau, kmax=None):
    """g(mu) = sum_{k>=0} mu tau^k/(1 - mu tau^k) + sum_{k>=1} tau^k/(tau^k - mu)
    for complex mu in the annulus tau < |mu| < 1."""
    mu = np.asarray(mu, dtype=complex)
    if kmax is None:
        kmax = int(math.ceil(math.log(1e-18) / math.log(tau))) + 2
    k = np.arange(kmax + 1)
    tk = tau ** k
    first = np.sum(mu[..., None] * tk / (1.0 - mu[..., None] * tk), axis=-1)
    second = np.sum(tk[1:] / (tk[1:] - mu[..., None]), axis=-1)
    return first + second


def g_contour(tau, nodes=4096):
    """G = (1/2 pi i) oint dmu/mu g(mu) (mu; tau)_inf on |mu| = sqrt(tau).

    Independent third route for the shift constant: the integrand is
    analytic in the annulus tau < |mu| < 1, so the periodic trapezoid rule
    converges geometrically.
    """
    r = math.sqrt(tau)
    theta = 2 * np.pi * np.arange(nodes) / nodes
    mu = r * np.exp(1j * theta)
    kmax = int(math.ceil(math.log(1e-18) / math.log(tau))) + 2
    poch = np.ones_like(mu)
    for j in range(kmax + 1):
        poch *= 1.0 - mu * tau ** j
    vals = g_of_mu(mu, tau, kmax) * poch
    return float(np.mean(vals).real)


@dataclass(frozen=True)
class QSeriesShift:
    p: float
    q: float = field(init=False)
    tau: float = field(init=False)
    a_pq: float = field(init=False)
    G: float = field(init=False)

    def __post_init__(self):
        if not 0.5 < self.p < 1.0:
            raise ValueError("p must lie in (1/2, 1)")
        q = 1.0 - self.p
        tau = q / self.p
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "a_pq", a_pq(self.p))
        object.__setattr__(self, "G", g_contour(tau))

    def g_of_mu(self, mu):
        return g_of_mu(mu, self.tau)


# ---------------------------------------------------------------------------
# per-model scaling


@dataclass(frozen=True)
class ScalingConstants:
    """Macroscopic data of one model.

    Heights: h_resc = (h - c1 t - a) delta_t.
    Particles: s = (c1 t - a - x) delta_t, i.e. X(s) = c1 t - s/delta_t - a,
    measured from the reference position of the tagged particle (-2n for
    the alternating start; for step starts c1 t already includes -n).
    delta_t(t) = 1/(c2 t^{1/3}).
    """

    model: str
    c1: float
    c2: float
    a: float
    eta: float
    sigma: Optional[float] = None
    p: float = 1.0

    def delta_t(self, t):
        return 1.0 / (self.c2 * float(t) ** (1.0 / 3.0))

    @property
    def is_height(self):
        return self.model in ("png_droplet", "png_flat")

    def as_dict(self):
        return {
            "model": self.model,
            "c1": self.c1,
            "c2": self.c2,
            "a": self.a,
            "eta": self.eta,
            "sigma": self.sigma,
            "p": self.p,
        }


def step_coefficients(sigma):
    """(c1, c2) = (1 - 2 sqrt(sigma), sigma^{-1/6} (1 - sqrt(sigma))^{2/3})."""
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")
    rs = math.sqrt(sigma)
    return 1.0 - 2.0 * rs, sigma ** (-1.0 / 6.0) * (1.0 - rs) ** (2.0 / 3.0)


def scaling_constants(model, sigma=None, p=None, a=None):
    """Default scaling constants; ``a`` overrides the lattice shift."""
    model = canonical_model(model)
    if model == "png_flat":
        base = ScalingConstants(model, c1=2.0, c2=2.0 ** (1.0 / 3.0), a=0.0, eta=-0.5)
    elif model == "png_droplet":
        base = ScalingConstants(model, c1=2.0, c2=1.0, a=0.5, eta=0.0)
    elif model == "tasep_alt":
        base = ScalingConstants(model, c1=0.5, c2=1.0, a=0.5, eta=0.0)
    else:
        if sigma is None:
            raise ValueError(f"{model} needs sigma")
        c1, c2 = step_coefficients(sigma)
        if model == "tasep_step":
            base = ScalingConstants(model, c1, c2, a=0.5, eta=0.0, sigma=float(sigma))
        else:
            if p is None:
                raise ValueError("pasep_step needs p")
            p = float(p)
            if not 0.5 < p <= 1.0:
                raise ValueError("p must lie in (1/2, 1]")
            shift = 0.5 - a_pq(p) / math.sqrt(sigma)
            base = ScalingConstants(model, c1, c2, a=shift, eta=shift - 0.5,
                                    sigma=float(sigma), p=p)
    if a is not None:
        base = ScalingConstants(base.model, base.c1, base.c2, a=float(a),
                                eta=float(a) - 0.5, sigma=base.sigma, p=base.p)
    return base
