"""Block maxima of magnitudes and their marginal models (ECDF or GEV)."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .errors import ConfigError, FitError, TooShortError
from .signal_lab import BandSpec, TimeSeries

GEV_EPS = 1e-10
XI_BOUNDS = (-0.5, 0.5)
GUMBEL_TOL = 1e-6


@dataclass(frozen=True)
class BlockMaximaSeries:
    values: np.ndarray
    m: int
    fs: float
    band: BandSpec | None = None
    source_label: str = ""

    def __len__(self):
        return len(self.values)


def block_maxima(x: TimeSeries, m: int, band: BandSpec | None = None) -> BlockMaximaSeries:
    """Maxima of ``|x|`` over consecutive blocks of ``m`` samples; a partial tail block is dropped."""
    if int(m) != m or m < 1:
        raise ConfigError(f"block size must be a positive integer, got {m}")
    n_blocks = len(x) // m
    if n_blocks == 0:
        raise TooShortError(f"{x.label or 'series'}: {len(x)} samples < block size {m}")
    mags = np.abs(x.values[: n_blocks * m]).reshape(n_blocks, m)
    return BlockMaximaSeries(mags.max(axis=1), int(m), x.fs, band, x.label)


# ---------------------------------------------------------------------------
# GEV


@dataclass(frozen=True)
class GevParams:
    mu: float
    sigma: float
    xi: float
    loglik: float = float("nan")
    converged: bool = True

    def cdf(self, x):
        return gev_cdf(x, self.mu, self.sigma, self.xi)


def gev_cdf(x, mu, sigma, xi):
    z = (np.asarray(x, dtype=float) - mu) / sigma
    if abs(xi) < GUMBEL_TOL:
        return np.exp(-np.exp(-z))
    t = np.maximum(1.0 + xi * z, 0.0)
    with np.errstate(divide="ignore"):
        return np.exp(-(t ** (-1.0 / xi)))


def gev_loglik(params, x) -> float:
    """Log-likelihood with the Gumbel branch used when ``|xi| < 1e-6``."""
    mu, sigma, xi = params
    if sigma <= 0:
        return -np.inf
    z = (x - mu) / sigma
    n = x.shape[0]
    if abs(xi) < GUMBEL_TOL:
        return float(-n * math.log(sigma) - np.sum(z) - np.sum(np.exp(-z)))
    t = 1.0 + xi * z
    if np.any(t <= 0):
        return -np.inf
    lt = np.log(t)
    return float(-n * math.log(sigma) - (1.0 + 1.0 / xi) * np.sum(lt) - np.sum(np.exp(-lt / xi)))


def _pwm_start(x):
    # Hosking's probability-weighted-moment estimator, xi in the G(x) sign convention.
    xs = np.sort(x)
    n = len(xs)
    j = np.arange(n)
    b0 = xs.mean()
    b1 = np.sum(j * xs) / (n * (n - 1))
    b2 = np.sum(j * (j - 1) * xs) / (n * (n - 1) * (n - 2))
    c = (2 * b1 - b0) / (3 * b2 - b0) - math.log(2) / math.log(3)
    k = 7.859 * c + 2.9554 * c * c
    k = float(np.clip(k, -0.45, 0.45))
    if abs(k) < 1e-6:
        sigma = (2 * b1 - b0) / math.log(2)
        mu = b0 - 0.5772156649 * sigma
    else:
        g = math.gamma(1 + k)
        sigma = (2 * b1 - b0) * k / (g * (1 - 2 ** (-k)))
        mu = b0 + sigma * (g - 1) / k
    return mu, max(sigma, 1e-6), -k


def fit_gev(x, restarts: int = 3) -> GevParams:
    """Bounded multi-start maximum likelihood for the GEV."""
    x = np.asarray(getattr(x, "values", x), dtype=float)
    n = len(x)
    if n < 3 or np.ptp(x) <= 1e-12 * max(1.0, np.abs(x).max()):
        raise FitError("GEV fit needs a non-degenerate sample", n=n)
    if n < 30:
        warnings.warn(f"GEV fit on only {n} block maxima", stacklevel=2)

    mu0, s0, xi0 = _pwm_start(x)
    starts = [(mu0, s0, xi0)]
    for delta in (-0.15, 0.15)[: max(restarts - 1, 0)]:
        starts.append((mu0, s0 * (1 + delta), float(np.clip(xi0 + delta, *XI_BOUNDS))))

    scale = np.std(x) + 1e-12
    bounds = [(None, None), (1e-8, None), XI_BOUNDS]

    def nll(p):
        ll = gev_loglik(p, x)
        return 1e10 if not np.isfinite(ll) else -ll / n

    best = None
    for start in starts:
        # Shift the start inside the support if needed.
        mu, s, xi = start
        if xi != 0 and np.any(1 + xi * (x - mu) / s <= 0):
            xi = 0.0
        res = optimize.minimize(nll, [mu, s, xi], method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": 500, "ftol": 1e-13, "gtol": 1e-9})
        if best is None or res.fun < best.fun:
            best = res
    mu, sigma, xi = best.x
    ll = gev_loglik(best.x, x)
    if not np.isfinite(ll) or sigma <= 1e-7 * scale:
        raise FitError("GEV likelihood did not converge", n=n, params=tuple(best.x), message=best.message)
    return GevParams(float(mu), float(sigma), float(xi), float(ll), bool(best.success))


def gev_rvs(mu, sigma, xi, n, rng) -> np.ndarray:
    u = rng.uniform(size=n)
    if abs(xi) < GUMBEL_TOL:
        return mu - sigma * np.log(-np.log(u))
    return mu + sigma * ((-np.log(u)) ** (-xi) - 1.0) / xi


# ---------------------------------------------------------------------------
# ECDF


@dataclass(frozen=True)
class Ecdf:
    """ECDF rescaled by n/(n+1); ties get their average rank."""

    sample: np.ndarray

    def cdf(self, x):
        s = self.sample
        x = np.asarray(x, dtype=float)
        below = np.searchsorted(s, x, side="left")
        upto = np.searchsorted(s, x, side="right")
        return (below + 0.5 * (upto - below + 1)) / (len(s) + 1)


@dataclass(frozen=True)
class MarginModel:
    """Piecewise margin: one ECDF or GEV per contiguous index segment."""

    kind: str
    segments: tuple = field(default_factory=tuple)  # (start, stop, model)

    @property
    def n(self):
        return self.segments[-1][1] if self.segments else 0

    def to_dict(self):
        out = []
        for start, stop, model in self.segments:
            if isinstance(model, GevParams):
                params = {"mu": model.mu, "sigma": model.sigma, "xi": model.xi,
                          "loglik": model.loglik, "converged": model.converged}
            else:
                params = {"sample": model.sample.tolist()}
            out.append({"start": start, "stop": stop, **params})
        return {"kind": self.kind, "segments": out}

    @classmethod
    def from_dict(cls, d):
        segs = []
        for s in d["segments"]:
            if d["kind"] == "gev":
                model = GevParams(s["mu"], s["sigma"], s["xi"], s.get("loglik", float("nan")),
                                  s.get("converged", True))
            else:
                model = Ecdf(np.asarray(s["sample"], dtype=float))
            segs.append((s["start"], s["stop"], model))
        return cls(d["kind"], tuple(segs))


def segment_bounds(n: int, segment_length: int | None = None, n_segments: int | None = None,
                   min_size: int = 10):
    """Partition ``range(n)`` into equal segments; the last one absorbs the remainder."""
    if segment_length is not None and n_segments is not None:
        raise ConfigError("give either a segment length or a segment count, not both")
    if segment_length is not None:
        if segment_length < 1:
            raise ConfigError("segment length must be positive")
        q = max(1, n // int(segment_length))
    else:
        q = 1 if n_segments is None else int(n_segments)
    if q < 1:
        raise ConfigError("need at least one segment")
    size = n // q
    if size < min_size:
        raise ConfigError(f"segments of {size} observations are too small (minimum {min_size})")
    edges = [i * size for i in range(q)] + [n]
    return list(zip(edges[:-1], edges[1:]))


def fit_ecdf(x, segment_length: int | None = None, n_segments: int | None = None) -> MarginModel:
    values = np.asarray(getattr(x, "values", x), dtype=float)
    bounds = segment_bounds(len(values), segment_length, n_segments)
    segs = tuple((a, b, Ecdf(np.sort(values[a:b]))) for a, b in bounds)
    return MarginModel("ecdf", segs)


def fit_gev_margin(x, segment_length: int | None = None, n_segments: int | None = None) -> MarginModel:
    values = np.asarray(getattr(x, "values", x), dtype=float)
    bounds = segment_bounds(len(values), segment_length, n_segments)
    segs = tuple((a, b, fit_gev(values[a:b])) for a, b in bounds)
    return MarginModel("gev", segs)


def pit(x, model: MarginModel) -> np.ndarray:
    """Transform each observation with its own segment's margin."""
    values = np.asarray(getattr(x, "values", x), dtype=float)
    if len(values) != model.n:
        raise ConfigError(f"margin fitted on {model.n} observations, got {len(values)}")
    out = np.empty_like(values)
    for a, b, seg in model.segments:
        out[a:b] = seg.cdf(values[a:b])
    if model.kind == "gev":
        np.clip(out, GEV_EPS, 1 - GEV_EPS, out=out)
    return out


def ks_uniform(u) -> float:
    """Kolmogorov-Smirnov distance of a sample to Uniform(0, 1)."""
    return float(stats.kstest(u, "uniform").statistic)
