"""Skewed Student-t density and quantile matching.

Density of the four-parameter skewed t:

    f(y) = (2/sigma) t(z; nu) T(alpha z sqrt((nu+1)/(nu+z^2)); nu+1),  z = (y-mu)/sigma,

with t and T the Student-t pdf and cdf.  The cdf of f has no closed form
and is obtained by Gauss-Legendre quadrature on a tail-mapped variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.optimize import minimize

from .errors import NumericError, ParameterError

NU_MIN = 1.01
NU_MAX = 1.0e4
DEFAULT_PROBS = (0.05, 0.25, 0.75, 0.95)

_BETA_EPS = 1e-16
_BETA_FPMIN = 1e-300
_BETA_MAXIT = 20000

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_V_MAX = 20.0  # extent of the mapped tail variable
_PANEL = 0.5  # panel width for quadrature in both variables
_QUANTILE_TOL = 1e-13
_MAX_NEWTON = 200

ST_OK = 0
ST_NOCONV = 1


# ---------------------------------------------------------------- Student t


@nb.njit(cache=True)
def _betacf(a, b, x):
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_FPMIN:
        d = _BETA_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAXIT + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        de = d * c
        h *= de
        if abs(de - 1.0) < _BETA_EPS:
            return h
    return np.nan


@nb.njit(cache=True)
def betainc_reg(a, b, x, xc):
    """Regularized incomplete beta I_x(a, b); ``xc`` must equal 1 - x exactly."""
    if x <= 0.0:
        return 0.0
    if xc <= 0.0:
        return 1.0
    lbt = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(xc)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lbt) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _betacf(b, a, xc) / b


@nb.njit(cache=True)
def t_cdf(x, nu):
    if x == 0.0:
        return 0.5
    if math.isinf(x):
        return 1.0 if x > 0 else 0.0
    x2 = x * x
    # I_{nu/(nu+x^2)}(nu/2, 1/2) with both arguments formed without cancellation
    if x2 > nu:
        r = nu / x2
        xx = r / (1.0 + r)
        xc = 1.0 / (1.0 + r)
    else:
        r = x2 / nu
        xx = 1.0 / (1.0 + r)
        xc = r / (1.0 + r)
    tail = 0.5 * betainc_reg(0.5 * nu, 0.5, xx, xc)
    return 1.0 - tail if x > 0.0 else tail


@nb.njit(cache=True)
def t_logpdf(x, nu):
    return (
        math.lgamma(0.5 * (nu + 1.0))
        - math.lgamma(0.5 * nu)
        - 0.5 * math.log(nu * math.pi)
        - 0.5 * (nu + 1.0) * math.log1p(x * x / nu)
    )


# ---------------------------------------------------------- skewed t kernel


@nb.njit(cache=True)
def _pdf_std(z, alpha, nu):
    if math.isinf(z):
        return 0.0
    base = math.exp(t_logpdf(z, nu))
    if alpha == 0.0:
        return base
    w = alpha * z * math.sqrt((nu + 1.0) / (nu + z * z))
    return 2.0 * base * t_cdf(w, nu + 1.0)


@nb.njit(cache=True)
def _tail_mass(z, side, alpha, nu, gx, gw):
    """Mass beyond z: side=+1 gives P(Z > z), side=-1 gives P(Z < z).

    Substitution u = z + side * expm1(q v) / q with q = 2/nu makes the
    integrand decay at least like exp(-2v) for every nu.
    """
    q = 2.0 / nu
    npan = int(_V_MAX / _PANEL)
    acc = 0.0
    for k in range(npan):
        lo = k * _PANEL
        half = 0.5 * _PANEL
        mid = lo + half
        for i in range(gx.shape[0]):
            v = mid + half * gx[i]
            e = math.exp(q * v)
            u = z + side * math.expm1(q * v) / q
            acc += half * gw[i] * _pdf_std(u, alpha, nu) * e
    return acc


@nb.njit(cache=True)
def _segment(a, b, alpha, nu, gx, gw):
    """Integral of the standardized density from a to b (a > b allowed)."""
    if a == b:
        return 0.0
    n = int(math.ceil(abs(b - a) / _PANEL))
    h = (b - a) / n
    acc = 0.0
    for k in range(n):
        mid = a + (k + 0.5) * h
        for i in range(gx.shape[0]):
            acc += 0.5 * h * gw[i] * _pdf_std(mid + 0.5 * h * gx[i], alpha, nu)
    return acc


@nb.njit(cache=True)
def _cdf_std(z, alpha, nu, gx, gw):
    if z <= 0.0:
        return _tail_mass(z, -1.0, alpha, nu, gx, gw)
    return 1.0 - _tail_mass(z, 1.0, alpha, nu, gx, gw)


@nb.njit(cache=True)
def _quantile_from(p, x, F, alpha, nu, gx, gw):
    """Safeguarded Newton search for F(x) = p, starting from a known (x, F(x))."""
    lo = -np.inf
    hi = np.inf
    for it in range(_MAX_NEWTON):
        if abs(F - p) <= _QUANTILE_TOL:
            return x, F, it, ST_OK
        if F < p:
            lo = x
        else:
            hi = x
        f = _pdf_std(x, alpha, nu)
        step = (p - F) / f if f > 0.0 else np.inf
        xn = x + step
        if math.isfinite(lo) and math.isfinite(hi):
            if not (lo < xn < hi):
                xn = 0.5 * (lo + hi)
        else:
            cap = max(2.0, 2.0 * abs(x))
            if not math.isfinite(xn) or abs(xn - x) > cap:
                xn = x + (cap if F < p else -cap)
        if abs(xn - x) <= 1e-15 * (1.0 + abs(x)):
            return x, F, it, ST_OK if abs(F - p) < 1e-10 else ST_NOCONV
        if abs(xn - x) <= 4.0:
            F = F + _segment(x, xn, alpha, nu, gx, gw)
        else:
            F = _cdf_std(xn, alpha, nu, gx, gw)
        x = xn
    return x, F, _MAX_NEWTON, ST_NOCONV


@nb.njit(cache=True)
def _quantiles_std(ps, alpha, nu, gx, gw):
    out = np.empty(ps.shape[0])
    status = np.zeros(ps.shape[0], dtype=np.int64)
    F0 = _cdf_std(0.0, alpha, nu, gx, gw)
    for j in range(ps.shape[0]):
        x, F, it, st = _quantile_from(ps[j], 0.0, F0, alpha, nu, gx, gw)
        out[j] = x
        status[j] = st
    return out, status


@nb.njit(cache=True)
def _pdf_many(z, alpha, nu):
    out = np.empty(z.shape[0])
    for i in range(z.shape[0]):
        out[i] = _pdf_std(z[i], alpha, nu)
    return out


@nb.njit(cache=True)
def _cdf_many(z, alpha, nu, gx, gw):
    out = np.empty(z.shape[0])
    for i in range(z.shape[0]):
        out[i] = _cdf_std(z[i], alpha, nu, gx, gw)
    return out


# ------------------------------------------------------------- public API


@dataclass(frozen=True)
class SkewTParams:
    mu: float
    sigma: float
    alpha: float
    nu: float

    def __post_init__(self):
        vals = (self.mu, self.sigma, self.alpha, self.nu)
        if not all(np.isfinite(v) for v in vals):
            raise ParameterError(f"skewed-t parameters must be finite, got {vals}")
        if self.sigma <= 0:
            raise ParameterError("sigma must be positive")
        if self.nu <= 0:
            raise ParameterError("nu must be positive")


def student_t_cdf(x, nu):
    x = np.asarray(x, dtype=float)
    if nu <= 0:
        raise ParameterError("nu must be positive")
    out = np.array([t_cdf(float(v), float(nu)) for v in x.ravel()])
    return out.reshape(x.shape) if x.ndim else float(out[0])


def student_t_pdf(x, nu):
    if nu <= 0:
        raise ParameterError("nu must be positive")
    return _pdf_many_wrap(x, 0.0, float(nu))


def _pdf_many_wrap(z, alpha, nu):
    z = np.asarray(z, dtype=float)
    out = _pdf_many(np.ascontiguousarray(z.ravel()), alpha, nu)
    return out.reshape(z.shape) if z.ndim else float(out[0])


def skewt_pdf(y, params: SkewTParams):
    z = (np.asarray(y, dtype=float) - params.mu) / params.sigma
    return _pdf_many_wrap(z, float(params.alpha), float(params.nu)) / params.sigma


def skewt_cdf(y, params: SkewTParams):
    z = (np.asarray(y, dtype=float) - params.mu) / params.sigma
    out = _cdf_many(np.ascontiguousarray(np.atleast_1d(z).ravel()), float(params.alpha),
                    float(params.nu), _GL_X, _GL_W)
    return out.reshape(z.shape) if z.ndim else float(out[0])


def skewt_quantile(p, params: SkewTParams):
    """Inverse cdf; |cdf(result) - p| stays below 1e-10 (typically 1e-13)."""
    ps = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(~(ps > 0.0)) or np.any(~(ps < 1.0)):
        raise ParameterError("probabilities must lie strictly inside (0, 1)")
    z, status = _quantiles_std(np.ascontiguousarray(ps.ravel()), float(params.alpha),
                               float(params.nu), _GL_X, _GL_W)
    bad = np.flatnonzero(status != ST_OK)
    if bad.size:
        raise NumericError(
            f"quantile search failed at p={ps.ravel()[bad[0]]}",
            trace={"p": float(ps.ravel()[bad[0]]), "last_point": float(z[bad[0]]), "params": params},
        )
    y = params.mu + params.sigma * z
    return y.reshape(np.shape(p)) if np.ndim(p) else float(y[0])


def total_mass(params: SkewTParams, half_width: float | None = None) -> float:
    """Integral of the density over mu +- half_width*sigma, or the whole line if None."""
    a, nu = float(params.alpha), float(params.nu)
    if half_width is None:
        return _tail_mass(0.0, -1.0, a, nu, _GL_X, _GL_W) + _tail_mass(0.0, 1.0, a, nu, _GL_X, _GL_W)
    return _segment(-half_width, half_width, a, nu, _GL_X, _GL_W)


@dataclass(frozen=True)
class QuantileTargets:
    values: tuple
    probs: tuple = DEFAULT_PROBS

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if p.ndim != 1 or p.size != v.size:
            raise ParameterError("probs and values must be matching 1-d sequences")
        if p.size < 4:
            raise ParameterError("at least four target quantiles are needed")
        if np.any(p <= 0) or np.any(p >= 1) or np.any(np.diff(p) <= 0):
            raise ParameterError("target probabilities must be strictly increasing inside (0, 1)")
        if not np.all(np.isfinite(v)):
            raise ParameterError("target values must be finite")
        if np.any(np.diff(v) < 0):
            j = int(np.flatnonzero(np.diff(v) < 0)[0])
            raise ParameterError(
                f"target quantiles cross: q({p[j]}) = {v[j]} > q({p[j + 1]}) = {v[j + 1]}"
            )

    @property
    def degenerate(self) -> bool:
        return bool(np.any(np.diff(np.asarray(self.values, dtype=float)) == 0.0))


@dataclass(frozen=True)
class SkewTFit:
    params: SkewTParams
    objective: float
    iterations: int
    converged: bool
    restarts: int


def _nu_from(eta: float) -> float:
    return NU_MIN + min(math.exp(min(eta, 50.0)), NU_MAX - NU_MIN)


def _profile(alpha, nu, probs, values):
    """Least-squares (mu, sigma) for fixed shape; returns (sse, mu, sigma)."""
    z, status = _quantiles_std(probs, alpha, nu, _GL_X, _GL_W)
    if np.any(status != ST_OK):
        return np.inf, np.nan, np.nan
    zc = z - z.mean()
    sigma = float(zc @ (values - values.mean()) / (zc @ zc))
    if not sigma > 0:
        return np.inf, np.nan, np.nan
    mu = float(values.mean() - sigma * z.mean())
    r = values - mu - sigma * z
    return float(r @ r), mu, sigma


def fit_skewt(targets: QuantileTargets, *, max_restarts: int = 20, xatol: float = 1e-10) -> SkewTFit:
    """Least-squares match of skewed-t quantiles to ``targets``.

    Location and scale enter the quantiles linearly, so they are solved in
    closed form for each candidate (alpha, nu) and the simplex search runs
    over (alpha, log(nu - 1.01)).  The search restarts from its best point
    until a restart no longer improves the objective.
    """
    if targets.degenerate:
        raise ParameterError("flat target quantiles: a continuous density cannot match equal quantiles")
    probs = np.asarray(targets.probs, dtype=float)
    values = np.asarray(targets.values, dtype=float)
    scale = float(values[-1] - values[0])

    def obj(x):
        sse, _, _ = _profile(float(x[0]), _nu_from(float(x[1])), probs, values)
        return sse / scale**2

    x = np.array([0.0, math.log(10.0 - NU_MIN)])
    best = obj(x)
    iters = 0
    restarts = 0
    converged = False
    for restarts in range(1, max_restarts + 1):
        res = minimize(obj, x, method="Nelder-Mead",
                       options={"xatol": xatol, "fatol": 1e-18, "maxiter": 4000, "maxfev": 8000,
                                "initial_simplex": x + np.array([[0, 0], [0.5, 0], [0, 0.5]])})
        iters += int(res.nit)
        improved = res.fun < best - 1e-15
        if res.fun <= best:
            x, best = res.x, float(res.fun)
        converged = bool(res.success)
        if not improved:
            break
    sse, mu, sigma = _profile(float(x[0]), _nu_from(float(x[1])), probs, values)
    if not np.isfinite(sse):
        raise NumericError("skewed-t fit found no feasible point", trace={"targets": values.tolist()})
    params = SkewTParams(mu, sigma, float(x[0]), _nu_from(float(x[1])))
    return SkewTFit(params, sse, iters, converged, restarts)
