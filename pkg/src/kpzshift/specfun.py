"""Special functions: Airy, integer-order Bessel, q-Pochhammer and basic
hypergeometric series.

Production Airy values come from ``scipy.special.airy``. The Maclaurin
series, the vertical-line contour integral and the asymptotic expansions
below are kept as independent reference routes for testing.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DivergenceError, RangeError

AIRY_MIN_X = -50.0

# Ai(0) and -Ai'(0)
_AI0 = 3.0 ** (-2.0 / 3.0) / math.gamma(2.0 / 3.0)
_AIP0 = 3.0 ** (-1.0 / 3.0) / math.gamma(1.0 / 3.0)


def _check_airy_arg(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise RangeError("Airy argument must be finite")
    if np.any(x < AIRY_MIN_X):
        raise RangeError(f"Airy argument below {AIRY_MIN_X} is outside the validated range")
    return x


def _scalar_or_array(v, like):
    return float(v) if np.ndim(like) == 0 else v


def airy_ai(x):
    """Ai(x) for real x >= -50 (scalar or array)."""
    x = _check_airy_arg(x)
    ai = special.airy(x)[0]
    return _scalar_or_array(ai, x)


def airy_ai_deriv(x, order=0):
    """Ai, Ai' or Ai'' at x; Ai'' is evaluated as x*Ai(x)."""
    x = _check_airy_arg(x)
    ai, aip, _, _ = special.airy(x)
    if order == 0:
        v = ai
    elif order == 1:
        v = aip
    elif order == 2:
        v = x * ai
    else:
        raise ValueError("order must be 0, 1 or 2")
    return _scalar_or_array(v, x)


def airy_ai_d4(x):
    """Fourth derivative, reduced with Ai'' = x Ai: x^2 Ai + 2 Ai'."""
    x = _check_airy_arg(x)
    ai, aip, _, _ = special.airy(x)
    return _scalar_or_array(x * x * ai + 2.0 * aip, x)


# ---------------------------------------------------------------------------
# reference routes


def airy_series(x, min_terms=30):
    """Maclaurin series for (Ai, Ai', Ai'') at a scalar x.

    Ai = c1 f - c2 g with f = sum a_k x^{3k}, g = sum b_k x^{3k+1}. Every
    derivative is summed term by term, so Ai'' does not use the ODE.
    """
    x = float(x)
    x3 = x ** 3
    f, fp, fpp = [], [], []
    g, gp, gpp = [], [], []
    a = 1.0  # a_k
    b = 1.0  # b_k
    k = 0
    while True:
        # f = sum a_k x^{3k}
        f.append(a * x3 ** k)
        if k >= 1:
            fp.append(3 * k * a * x ** (3 * k - 1))
            fpp.append(3 * k * (3 * k - 1) * a * x ** (3 * k - 2))
        g.append(b * x ** (3 * k + 1))
        gp.append((3 * k + 1) * b * x ** (3 * k))
        if k >= 1:
            gpp.append((3 * k + 1) * (3 * k) * b * x ** (3 * k - 1))
        big = max(abs(f[-1]), abs(g[-1]), abs(gp[-1]))
        if k >= min_terms and big < 1e-18:
            break
        if k > 400:
            break
        a /= (3 * k + 2) * (3 * k + 3)
        b /= (3 * k + 3) * (3 * k + 4)
        k += 1
    fs, fps, fpps = math.fsum(f), math.fsum(fp), math.fsum(fpp)
    gs, gps, gpps = math.fsum(g), math.fsum(gp), math.fsum(gpp)
    return (_AI0 * fs - _AIP0 * gs,
            _AI0 * fps - _AIP0 * gps,
            _AI0 * fpps - _AIP0 * gpps)


def airy_contour(x, nodes=2000):
    """(Ai, Ai', Ai'') for x > 0 from the integral along the vertical line
    through the saddle point z = sqrt(x).

    With z = sqrt(x) + i y the phase z^3/3 - x z becomes
    -zeta - sqrt(x) y^2 - i y^3/3, giving
        Ai(x)  =  e^{-zeta}/(2 pi) int exp(-r y^2) cos(y^3/3) dy,
        Ai'(x) = -e^{-zeta}/(2 pi) int exp(-r y^2) [r cos(y^3/3) + y sin(y^3/3)] dy,
        Ai''(x) = e^{-zeta}/(2 pi) int exp(-r y^2) [(r^2 - y^2) cos + 2 r y sin] dy,
    with r = sqrt(x), zeta = 2/3 x^{3/2}. Trapezoid on a window where the
    Gaussian factor drops below 1e-18.
    """
    x = float(x)
    if x <= 0:
        raise RangeError("contour route is for x > 0")
    r = math.sqrt(x)
    zeta = 2.0 / 3.0 * x * r
    half = math.sqrt(42.0 / r)
    y = np.linspace(-half, half, nodes + 1)
    h = y[1] - y[0]
    gauss = np.exp(-r * y * y)
    c = np.cos(y ** 3 / 3.0)
    s = np.sin(y ** 3 / 3.0)
    ai = math.exp(-zeta) / (2 * math.pi) * h * np.sum(gauss * c)
    aip = -math.exp(-zeta) / (2 * math.pi) * h * np.sum(gauss * (r * c + y * s))
    aipp = math.exp(-zeta) / (2 * math.pi) * h * np.sum(gauss * ((x - y * y) * c + 2 * r * y * s))
    return ai, aip, aipp


def _asym_coeffs(kmax):
    u = [1.0]
    for k in range(1, kmax + 1):
        u.append(u[-1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216.0 * k))
    v = [1.0] + [-(6 * k + 1) / (6 * k - 1) * u[k] for k in range(1, kmax + 1)]
    return u, v


def airy_asymptotic(x, kmax=40):
    """(Ai, Ai') from the large-|x| asymptotic expansions, |x| >= 6.

    Series are cut at their smallest term (optimal truncation).
    """
    x = float(x)
    if abs(x) < 6:
        raise RangeError("asymptotic route is for |x| >= 6")
    u, v = _asym_coeffs(kmax)
    y = abs(x)
    zeta = 2.0 / 3.0 * y ** 1.5

    def trunc(coef, sign_alt, start, step):
        out = []
        prev = math.inf
        for j, k in enumerate(range(start, kmax + 1, step)):
            term = (-1) ** j * coef[k] / zeta ** k if sign_alt else coef[k] / zeta ** k
            if abs(term) > prev:
                break
            out.append(term)
            prev = abs(term)
        return math.fsum(out)

    if x > 0:
        su = math.fsum((-1) ** k * u[k] / zeta ** k for k in range(0, 12))
        sv = math.fsum((-1) ** k * v[k] / zeta ** k for k in range(0, 12))
        pref = math.exp(-zeta) / (2 * math.sqrt(math.pi))
        return pref * su / y ** 0.25, -pref * y ** 0.25 * sv
    ph = zeta - math.pi / 4
    ue, uo = trunc(u, True, 0, 2), trunc(u, True, 1, 2)
    ve, vo = trunc(v, True, 0, 2), trunc(v, True, 1, 2)
    ai = (math.cos(ph) * ue + math.sin(ph) * uo) / (math.sqrt(math.pi) * y ** 0.25)
    aip = y ** 0.25 / math.sqrt(math.pi) * (math.sin(ph) * ve - math.cos(ph) * vo)
    return ai, aip


# ---------------------------------------------------------------------------
# Bessel J_n, integer order


def _pow2_at_least(m):
    return 1 << max(6, int(math.ceil(math.log2(max(m, 1)))))


def bessel_j(order, x):
    """J_n(x) for integer n and real x >= 0.

    J_n(x) = (1/2 pi i) oint z^{-n-1} exp(x (z - 1/z)/2) dz evaluated by the
    trapezoid rule on |z| = r. For n <= x the unit circle is used; for n > x
    r is the real saddle point (n + sqrt(n^2 - x^2))/x, and the integrand is
    accumulated relative to its peak value to avoid overflow.
    """
    n = int(order)
    x = float(x)
    if x < 0:
        raise RangeError("bessel_j requires x >= 0")
    if n < 0:
        return (-1) ** (-n) * bessel_j(-n, x)
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    big = max(n, x)
    nodes = _pow2_at_least(n + x + 30.0 * big ** (1.0 / 3.0) + 64)
    theta = 2 * np.pi * np.arange(nodes) / nodes
    if n <= x:
        logr = 0.0
    else:
        logr = math.log((n + math.sqrt((n - x) * (n + x))) / x)
    r = math.exp(logr)
    e = np.exp(1j * theta)
    expo = 0.5 * x * (r * e - 1.0 / (r * e)) - n * (logr + 1j * theta)
    peak = 0.5 * x * (r - 1.0 / r) - n * logr
    vals = np.exp(expo - peak)
    mean = float(np.mean(vals).real)
    if peak < -745:
        return 0.0
    return mean * math.exp(peak)


def bessel_j_table(x, max_order):
    """J_0(x), ..., J_{max_order}(x) from one FFT on the unit circle.

    Orders well beyond x are accurate in absolute terms (about 1e-16).
    """
    x = float(x)
    if x < 0:
        raise RangeError("bessel_j_table requires x >= 0")
    nodes = _pow2_at_least(max_order + x + 30.0 * max(x, 1.0) ** (1.0 / 3.0) + 64)
    theta = 2 * np.pi * np.arange(nodes) / nodes
    c = np.fft.fft(np.exp(1j * x * np.sin(theta))) / nodes
    return c[: max_order + 1].real.copy()


# ---------------------------------------------------------------------------
# q-series


@dataclass(frozen=True)
class QContext:
    """Truncation settings for q-series in the ratio tau = q/p."""

    tau: float
    truncation_order: int = 100_000
    tolerance: float = 1e-15

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.truncation_order < 1 or self.tolerance <= 0:
            raise ValueError("truncation_order and tolerance must be positive")


def q_pochhammer(a, q, n=math.inf):
    """(a; q)_n = prod_{k<n} (1 - a q^k), n may be math.inf."""
    if not 0.0 <= q < 1.0:
        raise ValueError("q must lie in [0, 1)")
    if n != math.inf:
        n = int(n)
        if n < 0:
            raise ValueError("n must be nonnegative")
        out = 1.0
        aq = a
        for _ in range(n):
            out *= 1.0 - aq
            aq *= q
        return out
    if abs(a) * q >= 1.0:
        raise ValueError("infinite product needs |a| < 1/q")
    out = 1.0
    aq = a
    eps = np.finfo(float).eps * 1e-3
    while abs(aq) >= eps:
        out *= 1.0 - aq
        if out == 0.0:
            return 0.0
        aq *= q
    return out


def q_hypergeometric(r_params, s_params, q, z, ctx=None):
    """Basic hypergeometric series r phi s (a; b; q, z).

    Term n is prod (a_i;q)_n / prod (b_j;q)_n * z^n/(q;q)_n
    * ((-1)^n q^{n(n-1)/2})^{1+s-r}.
    Summation stops after 20 consecutive terms below tolerance*|sum|.
    """
    if ctx is None:
        ctx = QContext(tau=q)
    r, s = len(r_params), len(s_params)
    extra = 1 + s - r
    total = 1.0
    term = 1.0
    small = 0
    growing = 0
    prev = 1.0
    terms = [1.0]
    for n in range(ctx.truncation_order):
        num = 1.0
        for a in r_params:
            num *= 1.0 - a * q ** n
        den = 1.0 - q ** (n + 1)
        for b in s_params:
            den *= 1.0 - b * q ** n
        if den == 0.0:
            raise ZeroDivisionError("lower parameter hits a pole of the series")
        factor = num / den * z
        if extra:
            factor *= (-(q ** n)) ** extra
        term *= factor
        terms.append(term)
        total += term
        if term == 0.0:
            break
        if abs(term) >= abs(prev) and prev != 0.0:
            growing += 1
            if growing >= 10:
                raise DivergenceError("q-hypergeometric series is not converging")
        else:
            growing = 0
        prev = term
        if abs(term) < ctx.tolerance * abs(total):
            small += 1
            if small >= 20:
                break
        else:
            small = 0
    else:
        raise DivergenceError("q-hypergeometric series needs more than truncation_order terms")
    return math.fsum(terms)
