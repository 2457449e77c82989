"""Bivariate pair copulas: densities, h-functions, inverses, fitting and selection.

Conventions
-----------
``h1(u, v)`` is the conditional distribution of the first argument given the
second, ``dC(u, v)/dv``; ``h2(v, u)`` is ``dC(u, v)/du``.  Rotations follow
the usual counter-clockwise convention::

    c90(u, v)  = c(1 - u, v)
    c180(u, v) = c(1 - u, 1 - v)
    c270(u, v) = c(u, 1 - v)

Every base family used here is exchangeable, which lets ``h2`` be expressed
through the base ``h`` with swapped arguments.

Normal and Student-t distribution functions and quantiles come from
``scipy.special`` (Cephes rational approximations, double-precision accurate).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import ConfigError, DomainError, FitError, NumericalError

FAMILIES = ("indep", "gaussian", "t", "clayton", "gumbel", "frank", "joe")
ALIASES = {"independence": "indep", "student": "t", "studentt": "t", "normal": "gaussian"}
ROTATIONS = (0, 90, 180, 270)
N_PARAMS = {"indep": 0, "gaussian": 1, "t": 2, "clayton": 1, "gumbel": 1, "frank": 1, "joe": 1}

# Families whose negative dependence needs a 90/270 rotation.
ROTATED_FAMILIES = ("clayton", "gumbel", "joe")

BOUNDS = {
    "gaussian": [(-0.999, 0.999)],
    "t": [(-0.999, 0.999), (2.001, 30.0)],
    "clayton": [(1e-4, 28.0)],
    "gumbel": [(1.0 + 1e-4, 20.0)],
    "frank": [(-35.0, 35.0)],
    "joe": [(1.0 + 1e-4, 20.0)],
}

EPS = 1e-12
_TINY = 1e-300


def _clip(x):
    return np.clip(x, EPS, 1.0 - EPS)


def _flip(x):
    # 1 - x rounds to exactly 1 for x below 2**-53; keep it inside the open interval
    return np.minimum(1.0 - np.asarray(x, dtype=float), 1.0 - 2.0 ** -53)


# ---------------------------------------------------------------------------
# Base (rotation 0) families.  ``h(u, v)`` = dC/dv, ``hinv(p, v)`` solves h(u, v) = p.


def _indep_logpdf(u, v, th):
    return np.zeros(np.broadcast(u, v).shape)


def _indep_h(u, v, th):
    return np.broadcast_to(u, np.broadcast(u, v).shape).astype(float)


def _indep_hinv(p, v, th):
    return np.broadcast_to(p, np.broadcast(p, v).shape).astype(float)


def _indep_cdf(u, v, th):
    return u * v


def _gauss_logpdf(u, v, th):
    rho = th[0]
    x, y = special.ndtri(u), special.ndtri(v)
    r2 = 1.0 - rho * rho
    return -0.5 * math.log(r2) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)


def _gauss_h(u, v, th):
    rho = th[0]
    return special.ndtr((special.ndtri(u) - rho * special.ndtri(v)) / math.sqrt(1.0 - rho * rho))


def _gauss_hinv(p, v, th):
    rho = th[0]
    return special.ndtr(special.ndtri(p) * math.sqrt(1.0 - rho * rho) + rho * special.ndtri(v))


def _bvn_cdf(x, y, rho):
    # Owen's T representation of the bivariate normal CDF.
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    s = math.sqrt(1.0 - rho * rho)
    out = 0.5 * (special.ndtr(x) + special.ndtr(y))
    with np.errstate(divide="ignore", invalid="ignore"):
        # on an axis the Owen's T argument tends to +-inf
        ax = np.where(x != 0, (y - rho * x) / (x * s), np.sign(y) * np.inf)
        ay = np.where(y != 0, (x - rho * y) / (y * s), np.sign(x) * np.inf)
    ax = np.nan_to_num(ax, nan=0.0, posinf=np.inf, neginf=-np.inf)
    ay = np.nan_to_num(ay, nan=0.0, posinf=np.inf, neginf=-np.inf)
    out = out - special.owens_t(x, ax) - special.owens_t(y, ay)
    beta = np.where((x * y < 0) | ((x * y == 0) & (x + y < 0)), 0.5, 0.0)
    out = out - beta
    both = (x == 0) & (y == 0)
    return np.where(both, 0.25 + math.asin(rho) / (2 * math.pi), out)


def _gauss_cdf(u, v, th):
    return _bvn_cdf(special.ndtri(u), special.ndtri(v), th[0])


def _t_ppf(nu, u):
    """Student-t quantile through the inverse regularized incomplete beta.

    About three times faster than ``stdtrit`` and within 1e-10 of it.
    """
    u = np.asarray(u, dtype=float)
    shape = u.shape
    u = u.reshape(-1)
    p = 2.0 * np.minimum(u, 1.0 - u)
    x2 = np.empty_like(p)
    tail = p < 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        z = special.betaincinv(0.5 * nu, 0.5, p[tail])
        x2[tail] = nu * (1.0 - z) / z
        w = special.betaincinv(0.5, 0.5 * nu, 1.0 - p[~tail])
        x2[~tail] = nu * w / (1.0 - w)
    return np.copysign(np.sqrt(x2), u - 0.5).reshape(shape)


def _t_loglik_xy(x, y, rho, nu):
    r2 = 1.0 - rho * rho
    const = (special.gammaln((nu + 2) / 2) + special.gammaln(nu / 2)
             - 2 * special.gammaln((nu + 1) / 2) - 0.5 * np.log(r2))
    q = (x * x + y * y - 2 * rho * x * y) / (nu * r2)
    return (const - 0.5 * (nu + 2) * np.log1p(q)
            + 0.5 * (nu + 1) * (np.log1p(x * x / nu) + np.log1p(y * y / nu)))


def _t_logpdf(u, v, th):
    rho, nu = th
    return _t_loglik_xy(_t_ppf(nu, u), _t_ppf(nu, v), rho, nu)


def _t_h(u, v, th):
    rho, nu = th
    x, y = _t_ppf(nu, u), _t_ppf(nu, v)
    scale = np.sqrt((nu + y * y) * (1 - rho * rho) / (nu + 1))
    return special.stdtr(nu + 1, (x - rho * y) / scale)


def _t_hinv(p, v, th):
    rho, nu = th
    y = _t_ppf(nu, v)
    scale = np.sqrt((nu + y * y) * (1 - rho * rho) / (nu + 1))
    return special.stdtr(nu, _t_ppf(nu + 1, p) * scale + rho * y)


def _t_cdf(u, v, th):
    # Normal variance mixture: T2(x, y) = E_W[BVN(x sqrt(W/nu), y sqrt(W/nu))], W ~ chi2(nu).
    rho, nu = th
    shape = np.broadcast(u, v).shape
    x, y = (np.broadcast_to(_t_ppf(nu, a), shape).ravel() for a in (u, v))
    chi = stats.chi2(nu)

    def f(w):
        r = math.sqrt(w / nu)
        return _bvn_cdf(x * r, y * r, rho) * chi.pdf(w)

    val, _ = integrate.quad_vec(f, 0, np.inf, epsabs=1e-14, epsrel=1e-12, norm="max", limit=2000)
    return val.reshape(shape)


def _log_clayton_sum(u, v, th):
    # log(u^-th + v^-th - 1), stable for large th
    a = -th * np.log(u)
    b = -th * np.log(v)
    m = np.maximum(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))


def _clayton_logpdf(u, v, th):
    t = th[0]
    s = _log_clayton_sum(u, v, t)
    return math.log1p(t) - (1 + t) * (np.log(u) + np.log(v)) - (2 + 1 / t) * s


def _clayton_h(u, v, th):
    t = th[0]
    s = _log_clayton_sum(u, v, t)
    return np.exp(-(t + 1) * np.log(v) - (1 / t + 1) * s)


def _clayton_hinv(p, v, th):
    t = th[0]
    # u = (v^-t (p^{-t/(1+t)} - 1) + 1)^{-1/t}
    e = np.expm1(-t / (1 + t) * np.log(p))
    log_inner = np.logaddexp(0.0, -t * np.log(v) + np.log(np.maximum(e, _TINY)))
    return np.exp(-log_inner / t)


def _clayton_cdf(u, v, th):
    t = th[0]
    return np.exp(-_log_clayton_sum(u, v, t) / t)


def _gumbel_parts(u, v, t):
    x, y = -np.log(u), -np.log(v)
    lx, ly = np.log(x), np.log(y)
    m = np.maximum(lx, ly)
    log_s = t * m + np.log(np.exp(t * (lx - m)) + np.exp(t * (ly - m)))
    return x, y, lx, ly, log_s


def _gumbel_logpdf(u, v, th):
    t = th[0]
    x, y, lx, ly, log_s = _gumbel_parts(u, v, t)
    z = np.exp(log_s / t)
    return (-z + x + y + (t - 1) * (lx + ly) + (1 / t - 2) * log_s + np.log(z + t - 1))


def _gumbel_h(u, v, th):
    t = th[0]
    x, y, lx, ly, log_s = _gumbel_parts(u, v, t)
    z = np.exp(log_s / t)
    return np.exp(-z + (1 / t - 1) * log_s + (t - 1) * ly + y)


def _gumbel_hinv(p, v, th):
    t = th[0]
    y = -np.log(v)
    # Solve -z + (1-t) log z = log p + log v - (t-1) log y for z >= y; the left side is
    # convex and decreasing, so Newton from z = y climbs monotonically to the root.
    k = np.log(p) - y - (t - 1) * np.log(y)
    z = y.copy() if isinstance(y, np.ndarray) else np.array(y, dtype=float)
    z = np.broadcast_to(z, np.broadcast(p, v).shape).copy()
    k = np.broadcast_to(k, z.shape)
    for _ in range(100):
        g = -z + (1 - t) * np.log(z) - k
        step = g / (-1 + (1 - t) / z)
        z = z - step
        if np.all(np.abs(step) <= 1e-15 * np.maximum(z, 1.0)):
            break
    yb = np.broadcast_to(y, z.shape)
    # x = (z^t - y^t)^{1/t} computed as z (1 - (y/z)^t)^{1/t}
    ratio = np.clip(yb / z, 0.0, 1.0)
    x = z * np.exp(np.log1p(-ratio ** t) / t)
    return np.exp(-x)


def _gumbel_cdf(u, v, th):
    t = th[0]
    *_, log_s = _gumbel_parts(u, v, t)
    return np.exp(-np.exp(log_s / t))


def _frank_small(th):
    return abs(th[0]) < 1e-8


def _frank_logpdf(u, v, th):
    t = th[0]
    if _frank_small(th):
        return _indep_logpdf(u, v, th)
    a, b, g = np.expm1(-t * u), np.expm1(-t * v), math.expm1(-t)
    return math.log(abs(t * -g)) + np.log1p(a) + np.log1p(b) - 2 * np.log(np.abs(g + a * b))


def _frank_h(u, v, th):
    t = th[0]
    if _frank_small(th):
        return _indep_h(u, v, th)
    a, b, g = np.expm1(-t * u), np.expm1(-t * v), math.expm1(-t)
    return (b + 1) * a / (g + a * b)


def _frank_hinv(p, v, th):
    t = th[0]
    if _frank_small(th):
        return _indep_hinv(p, v, th)
    b, g = np.expm1(-t * v), math.expm1(-t)
    a = p * g / (1 + b * (1 - p))
    return -np.log1p(a) / t


def _frank_cdf(u, v, th):
    t = th[0]
    if _frank_small(th):
        return u * v
    a, b, g = np.expm1(-t * u), np.expm1(-t * v), math.expm1(-t)
    return -np.log1p(a * b / g) / t


def _joe_parts(u, v, t):
    ub, vb = (1 - u) ** t, (1 - v) ** t
    s = ub + vb - ub * vb
    return ub, vb, s


def _joe_logpdf(u, v, th):
    t = th[0]
    ub, vb, s = _joe_parts(u, v, t)
    return ((1 / t - 2) * np.log(s) + (t - 1) * (np.log1p(-u) + np.log1p(-v)) + np.log(t - 1 + s))


def _joe_h(u, v, th):
    t = th[0]
    ub, vb, s = _joe_parts(u, v, t)
    return np.exp((1 / t - 1) * np.log(s) + (t - 1) * np.log1p(-v)) * (1 - ub)


def _joe_cdf(u, v, th):
    t = th[0]
    ub, vb, s = _joe_parts(u, v, t)
    return 1 - s ** (1 / t)


def _solve_h(h, logpdf, p, v, th, tol=1e-14, maxiter=200):
    """Safeguarded Newton on u for h(u, v) = p; h is increasing with slope c(u, v)."""
    p, v = np.broadcast_arrays(np.asarray(p, float), np.asarray(v, float))
    lo = np.zeros(p.shape)
    hi = np.ones(p.shape)
    x = p.copy()
    for _ in range(maxiter):
        xc = np.clip(x, 1e-300, 1 - 1e-16)
        f = h(xc, v, th) - p
        lo = np.where(f < 0, xc, lo)
        hi = np.where(f >= 0, xc, hi)
        with np.errstate(all="ignore"):
            newton = xc - f / np.exp(logpdf(xc, v, th))
        bad = ~np.isfinite(newton) | (newton <= lo) | (newton >= hi)
        hit = np.abs(f) <= 1e-16
        x = np.where(hit, xc, np.where(bad, 0.5 * (lo + hi), newton))
        if np.all((hi - lo <= tol) | hit):
            break
    else:
        if np.any(hi - lo > 1e-8):
            raise NumericalError("h-function inversion did not converge")
    return x


def _joe_hinv(p, v, th):
    return _solve_h(_joe_h, _joe_logpdf, p, v, th)


_BASE = {
    "indep": (_indep_logpdf, _indep_h, _indep_hinv, _indep_cdf),
    "gaussian": (_gauss_logpdf, _gauss_h, _gauss_hinv, _gauss_cdf),
    "t": (_t_logpdf, _t_h, _t_hinv, _t_cdf),
    "clayton": (_clayton_logpdf, _clayton_h, _clayton_hinv, _clayton_cdf),
    "gumbel": (_gumbel_logpdf, _gumbel_h, _gumbel_hinv, _gumbel_cdf),
    "frank": (_frank_logpdf, _frank_h, _frank_hinv, _frank_cdf),
    "joe": (_joe_logpdf, _joe_h, _joe_hinv, _joe_cdf),
}


def normalize_family(name: str) -> str:
    key = name.strip().lower()
    key = ALIASES.get(key, key)
    if key not in FAMILIES:
        raise ConfigError(f"unknown copula family {name!r}; choose from {', '.join(FAMILIES)}")
    return key


def _check_params(family, params):
    if len(params) != N_PARAMS[family]:
        raise ConfigError(f"{family} takes {N_PARAMS[family]} parameter(s), got {len(params)}")
    if family in ("gaussian", "t") and not -1 < params[0] < 1:
        raise ConfigError(f"{family}: rho must lie in (-1, 1), got {params[0]}")
    if family == "t" and not params[1] > 2:
        raise ConfigError(f"t: nu must exceed 2, got {params[1]}")
    if family == "clayton" and not params[0] > 0:
        raise ConfigError(f"clayton: theta must be positive, got {params[0]}")
    if family in ("gumbel", "joe") and not params[0] >= 1:
        raise ConfigError(f"{family}: theta must be >= 1, got {params[0]}")
    if family == "frank" and params[0] == 0:
        raise ConfigError("frank: theta must be non-zero")


@dataclass(frozen=True)
class PairCopula:
    family: str = "indep"
    params: tuple = ()
    rotation: int = 0

    def __post_init__(self):
        fam = normalize_family(self.family)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.rotation not in ROTATIONS:
            raise ConfigError(f"rotation must be one of {ROTATIONS}, got {self.rotation}")
        _check_params(fam, self.params)

    @property
    def is_independence(self) -> bool:
        return self.family == "indep"

    @property
    def n_params(self) -> int:
        return N_PARAMS[self.family]

    def __str__(self):
        par = ", ".join(f"{p:.4g}" for p in self.params)
        rot = f"@{self.rotation}" if self.rotation else ""
        return f"{self.family}({par}){rot}"

    # -- rotation plumbing -------------------------------------------------

    def logpdf(self, u, v):
        f = _BASE[self.family][0]
        r, th = self.rotation, self.params
        if r == 0:
            return f(u, v, th)
        if r == 90:
            return f(_flip(u), v, th)
        if r == 180:
            return f(_flip(u), _flip(v), th)
        return f(u, _flip(v), th)

    def pdf(self, u, v):
        return np.exp(self.logpdf(u, v))

    def h1(self, u, v):
        """F(u | v) = dC(u, v)/dv."""
        h = _BASE[self.family][1]
        r, th = self.rotation, self.params
        if r == 0:
            out = h(u, v, th)
        elif r == 90:
            out = 1 - h(_flip(u), v, th)
        elif r == 180:
            out = 1 - h(_flip(u), _flip(v), th)
        else:
            out = h(u, _flip(v), th)
        return _clip(out)

    def h2(self, v, u):
        """F(v | u) = dC(u, v)/du, the conditional of the second argument."""
        h = _BASE[self.family][1]
        r, th = self.rotation, self.params
        if r == 0:
            out = h(v, u, th)
        elif r == 90:
            out = h(v, _flip(u), th)
        elif r == 180:
            out = 1 - h(_flip(v), _flip(u), th)
        else:
            out = 1 - h(_flip(v), u, th)
        return _clip(out)

    def hinv1(self, p, v):
        """Solve h1(u, v) = p for u."""
        g = _BASE[self.family][2]
        r, th = self.rotation, self.params
        if r == 0:
            out = g(p, v, th)
        elif r == 90:
            out = 1 - g(_flip(p), v, th)
        elif r == 180:
            out = 1 - g(_flip(p), _flip(v), th)
        else:
            out = g(p, _flip(v), th)
        return _clip(out)

    def hinv2(self, p, u):
        """Solve h2(v, u) = p for v."""
        g = _BASE[self.family][2]
        r, th = self.rotation, self.params
        if r == 0:
            out = g(p, u, th)
        elif r == 90:
            out = g(p, _flip(u), th)
        elif r == 180:
            out = 1 - g(_flip(p), _flip(u), th)
        else:
            out = 1 - g(_flip(p), u, th)
        return _clip(out)

    def cdf(self, u, v):
        c = _BASE[self.family][3]
        r, th = self.rotation, self.params
        if r == 0:
            return c(u, v, th)
        if r == 90:
            return v - c(_flip(u), v, th)
        if r == 180:
            return u + v - 1 + c(_flip(u), _flip(v), th)
        return u - c(u, _flip(v), th)

    def loglik(self, u, v) -> float:
        return float(np.sum(self.logpdf(u, v)))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Conditional method: draw v, then u = h1^{-1}(p | v)."""
        v = rng.uniform(size=n)
        p = rng.uniform(size=n)
        return np.column_stack([self.hinv1(p, v), v])

    def kendall_tau(self) -> float:
        return kendall_tau_of(self)

    def to_dict(self):
        return {"family": self.family, "params": list(self.params), "rotation": self.rotation}

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], tuple(d.get("params", ())), int(d.get("rotation", 0)))


INDEPENDENCE = PairCopula()


def kendall_tau_of(c: PairCopula) -> float:
    """Population Kendall's tau of a pair copula."""
    f, th = c.family, c.params
    if f == "indep":
        tau = 0.0
    elif f in ("gaussian", "t"):
        tau = 2 / math.pi * math.asin(th[0])
    elif f == "clayton":
        tau = th[0] / (th[0] + 2)
    elif f == "gumbel":
        tau = 1 - 1 / th[0]
    elif f == "frank":
        t = th[0]
        d1 = integrate.quad(lambda s: s / math.expm1(s) if s else 1.0, 0, abs(t))[0] / abs(t)
        tau = 1 - 4 / abs(t) * (1 - d1)
        tau = math.copysign(tau, t)
    else:  # joe: 1 - 4 sum_k 1 / (k (t k + 2) (t (k - 1) + 2))
        t = th[0]
        k = np.arange(1, 200001, dtype=float)
        tau = 1 - 4 * float(np.sum(1 / (k * (t * k + 2) * (t * (k - 1) + 2))))
    return -tau if c.rotation in (90, 270) else tau


# ---------------------------------------------------------------------------
# public operation wrappers with domain checks


def _check_unit(*arrays):
    for a in arrays:
        a = np.asarray(a, dtype=float)
        if np.any(~(a > 0) | ~(a < 1)):
            raise DomainError("copula arguments must lie strictly inside (0, 1)")


def density(c: PairCopula, u, v):
    _check_unit(u, v)
    return c.pdf(np.asarray(u, float), np.asarray(v, float))


def h_function(c: PairCopula, u, v):
    _check_unit(u, v)
    return c.h1(np.asarray(u, float), np.asarray(v, float))


def h_inverse(c: PairCopula, p, v):
    _check_unit(p, v)
    return c.hinv1(np.asarray(p, float), np.asarray(v, float))


# ---------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class FitResult:
    copula: PairCopula
    loglik: float
    n: int

    @property
    def bic(self) -> float:
        return -2.0 * self.loglik + self.copula.n_params * math.log(self.n)

    @property
    def aic(self) -> float:
        return -2.0 * self.loglik + 2.0 * self.copula.n_params


def empirical_tau(u, v) -> float:
    tau = stats.kendalltau(u, v).statistic
    return 0.0 if not np.isfinite(tau) else float(tau)


def tau_independence_pvalue(tau: float, n: int) -> float:
    """Asymptotic normal test of tau = 0."""
    z = 3.0 * tau * math.sqrt(n * (n - 1)) / math.sqrt(2.0 * (2 * n + 5))
    return float(2.0 * special.ndtr(-abs(z)))


def _start_from_tau(family, tau):
    tau = float(np.clip(abs(tau), 0.02, 0.9))
    if family == "clayton":
        return 2 * tau / (1 - tau)
    if family in ("gumbel", "joe"):
        return 1 / (1 - tau)
    return None


def _nll(family, rotation, u, v):
    def f(params):
        try:
            cop = PairCopula.__new__(PairCopula)
            object.__setattr__(cop, "family", family)
            object.__setattr__(cop, "params", tuple(params))
            object.__setattr__(cop, "rotation", rotation)
            with np.errstate(all="ignore"):
                ll = np.sum(cop.logpdf(u, v))
        except (ValueError, ZeroDivisionError, FloatingPointError):
            return 1e300
        return -ll if np.isfinite(ll) else 1e300

    return f


def fit_mle(u, v, family: str, rotation: int = 0, tau: float | None = None) -> FitResult:
    """Maximum likelihood for one family/rotation on pseudo-observations."""
    family = normalize_family(family)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = u.shape[0]
    if n < 20:
        raise FitError(f"{family}: need at least 20 pairs, got {n}", family=family, n=n)
    _check_unit(u, v)
    if family == "indep":
        return FitResult(PairCopula(rotation=rotation), 0.0, n)

    f = _nll(family, rotation, u, v)
    if family == "t" and rotation == 0:
        x, fun, ok = _fit_t(u, v, empirical_tau(u, v) if tau is None else tau)
    elif family == "gaussian" and rotation == 0:
        x, fun, ok = _fit_gaussian(u, v)
    elif family == "t":
        if tau is None:
            tau = empirical_tau(u, v)
        rho0 = float(np.clip(math.sin(math.pi * tau / 2), -0.95, 0.95))
        res = optimize.minimize(f, [rho0, 8.0], method="L-BFGS-B", bounds=BOUNDS["t"],
                                options={"ftol": 1e-12, "gtol": 1e-7, "maxiter": 200})
        x, fun, ok = tuple(res.x), float(res.fun), bool(res.success)
    else:
        lo, hi = BOUNDS[family][0]
        if family == "gaussian":
            res = optimize.minimize_scalar(lambda r: f((r,)), bounds=(lo, hi), method="bounded",
                                           options={"xatol": 1e-7})
        elif family == "frank":
            # Frank has a removable singularity at 0; search each sign separately.
            best = None
            for a, b in ((lo, -1e-6), (1e-6, hi)):
                r = optimize.minimize_scalar(lambda t: f((t,)), bounds=(a, b), method="bounded",
                                             options={"xatol": 1e-7})
                if best is None or r.fun < best.fun:
                    best = r
            res = best
        else:
            res = optimize.minimize_scalar(lambda t: f((t,)), bounds=(lo, hi), method="bounded",
                                           options={"xatol": 1e-7})
        x, fun, ok = (float(res.x),), float(res.fun), bool(res.success)
    if not ok or not np.isfinite(fun) or fun >= 1e299:
        raise FitError(f"{family}@{rotation}: likelihood maximization failed", family=family,
                       rotation=rotation, params=x)
    return FitResult(PairCopula(family, x, rotation), -fun, n)


def _fit_gaussian(u, v):
    # The Gaussian log-likelihood only depends on two sufficient statistics.
    x, y = special.ndtri(u), special.ndtri(v)
    sq, xy, n = float(np.sum(x * x + y * y)), float(np.sum(x * y)), len(x)

    def nll(r):
        r2 = 1.0 - r * r
        return 0.5 * n * math.log(r2) + (r * r * sq - 2.0 * r * xy) / (2.0 * r2)

    res = optimize.minimize_scalar(nll, bounds=BOUNDS["gaussian"][0], method="bounded",
                                   options={"xatol": 1e-9})
    return (float(res.x),), float(res.fun), bool(res.success)


def _fit_t(u, v, tau):
    # Joint maximum via the profile likelihood in nu; quantiles are reused across rho.
    rho_bounds = BOUNDS["t"][0]

    def profile(nu):
        x, y = _t_ppf(nu, u), _t_ppf(nu, v)
        # Vectorized zoom over a rho grid: far cheaper than a scalar optimizer at small n.
        lo, hi = rho_bounds
        for _ in range(4):
            grid = np.linspace(lo, hi, 33)
            ll = _t_loglik_xy(x[:, None], y[:, None], grid[None, :], nu).sum(axis=0)
            i = int(np.argmax(ll))
            step = grid[1] - grid[0]
            lo, hi = max(grid[i] - step, rho_bounds[0]), min(grid[i] + step, rho_bounds[1])
        return -float(ll[i]), float(grid[i])

    lo, hi = BOUNDS["t"][1]
    outer = optimize.minimize_scalar(lambda nu: profile(nu)[0], bounds=(lo, hi), method="bounded",
                                     options={"xatol": 1e-2})
    best_nu = float(outer.x)
    fun, rho = profile(best_nu)
    edge_fun, edge_rho = profile(hi)
    if edge_fun < fun:
        fun, rho, best_nu = edge_fun, edge_rho, hi
    ok = bool(outer.success) and np.isfinite(fun)
    return (rho, best_nu), fun, ok


def candidate_specs(families, tau: float):
    """(family, rotation) pairs to try, in fixed enumeration order."""
    specs = []
    fams = [normalize_family(f) for f in families]
    for fam in FAMILIES:
        if fam not in fams:
            continue
        if fam in ROTATED_FAMILIES:
            rots = (0, 180) if tau >= 0 else (90, 270)
            specs.extend((fam, r) for r in rots)
        else:
            specs.append((fam, 0))
    return specs


def select_family(u, v, families=FAMILIES, level: float = 0.05) -> FitResult:
    """Pick a pair copula by BIC after a Kendall-tau test for independence."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = u.shape[0]
    tau = empirical_tau(u, v)
    fams = [normalize_family(f) for f in families]
    if not fams:
        raise ConfigError("empty candidate family set")
    if "indep" in fams and tau_independence_pvalue(tau, n) >= level:
        return FitResult(INDEPENDENCE, 0.0, n)
    fits, errors = [], []
    for order, (fam, rot) in enumerate(candidate_specs(fams, tau)):
        try:
            fit = fit_mle(u, v, fam, rot, tau=tau)
        except FitError as exc:
            errors.append(str(exc))
            continue
        fits.append((fit.bic, fit.copula.n_params, order, fit))
    if not fits:
        raise FitError("every candidate family failed to fit", errors=errors)
    fits.sort(key=lambda item: item[:3])
    return fits[0][3]


def fisher_se(fit: FitResult, u, v, step: float = 1e-4) -> np.ndarray:
    """Standard errors from a central-difference Hessian of the log-likelihood."""
    c = fit.copula
    f = _nll(c.family, c.rotation, np.asarray(u, float), np.asarray(v, float))
    x0 = np.array(c.params, dtype=float)
    k = len(x0)
    hess = np.empty((k, k))
    hs = step * np.maximum(1.0, np.abs(x0))
    for i in range(k):
        for j in range(k):
            ei = np.eye(k)[i] * hs[i]
            ej = np.eye(k)[j] * hs[j]
            hess[i, j] = (f(x0 + ei + ej) - f(x0 + ei - ej) - f(x0 - ei + ej) + f(x0 - ei - ej)) / (4 * hs[i] * hs[j])
    return np.sqrt(np.diag(np.linalg.inv(hess)))
