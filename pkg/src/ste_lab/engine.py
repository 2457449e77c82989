"""STE pipeline, null-copula resampling test and multiple-comparison correction."""
from __future__ import annotations

import hashlib
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import dvine
from .copulas import FAMILIES, normalize_family
from .dvine import DIRECTIONS, X_TO_Y, Y_TO_X, DVineModel, LaggedPanel, TeEstimate
from .errors import ConfigError, NumericalError, StageError, SteError
from .extremes import block_maxima, fit_ecdf, fit_gev_margin, pit
from .signal_lab import BandSpec, FilterSpec, TimeSeries, filter_band

log = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.05

# Purpose tags mixed into derived seeds.
_PURPOSE = {"observed": 0, "simulate": 1, "resample_te": 2}


def stable_hash(text: str) -> int:
    """64-bit hash that does not depend on PYTHONHASHSEED."""
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def derive_seed(root: int, cell: str, index: int, purpose: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(root) & (2**63 - 1), stable_hash(cell), int(index), _PURPOSE[purpose]])


@dataclass(frozen=True)
class SteConfig:
    """Everything except the data that determines an STE test."""

    m: int = 64
    k: int = 2
    ell: int = 2
    margin: str = "ecdf"
    segment_seconds: float | None = 15.0
    families: tuple = FAMILIES
    R: int = 5000
    n_mc: int = 10_000
    filter_order: int = 4
    zero_phase: bool = True
    raw_pvalue: bool = False
    select_level: float = 0.05

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"block size must be a positive integer, got {self.m}")
        if self.k < 1 or self.ell < 1:
            raise ConfigError("lags k and l must be at least 1")
        if self.R < 0:
            raise ConfigError("resample count must be non-negative")
        if self.margin not in ("ecdf", "gev"):
            raise ConfigError(f"margin must be 'ecdf' or 'gev', got {self.margin!r}")
        if self.segment_seconds is not None and not self.segment_seconds > 0:
            raise ConfigError("segment length must be positive")
        fams = tuple(normalize_family(f) for f in self.families)
        if not fams:
            raise ConfigError("empty candidate family set")
        object.__setattr__(self, "families", fams)

    def to_dict(self):
        d = asdict(self)
        d["families"] = list(self.families)
        return d


@dataclass(frozen=True)
class SteRequest:
    x: TimeSeries
    y: TimeSeries
    band_x: BandSpec
    band_y: BandSpec
    config: SteConfig = field(default_factory=SteConfig)
    seed: int = 0
    cell: str = ""

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ConfigError(f"series lengths differ: {len(self.x)} vs {len(self.y)}")
        if self.x.fs != self.y.fs:
            raise ConfigError("series have different sampling rates")


@dataclass(frozen=True)
class SteEstimate:
    xy: TeEstimate
    yx: TeEstimate
    vine: DVineModel
    panel: LaggedPanel

    def get(self, direction: str) -> TeEstimate:
        return self.xy if dvine.normalize_direction(direction) == X_TO_Y else self.yx


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except SteError as exc:
        raise StageError(name, exc) from exc


def _margin_uniforms(bm, cfg: SteConfig, fs: float):
    seg = None
    if cfg.segment_seconds is not None:
        seg = max(1, int(round(cfg.segment_seconds * fs / cfg.m)))
        seg = min(seg, len(bm))
    fit = fit_ecdf if cfg.margin == "ecdf" else fit_gev_margin
    return pit(bm.values, fit(bm.values, segment_length=seg))


def prepare_panel(req: SteRequest) -> LaggedPanel:
    cfg = req.config
    fx = _stage("filter", filter_band, req.x, FilterSpec(req.band_x, cfg.filter_order, cfg.zero_phase))
    fy = _stage("filter", filter_band, req.y, FilterSpec(req.band_y, cfg.filter_order, cfg.zero_phase))
    mx = _stage("block_maxima", block_maxima, fx, cfg.m, req.band_x)
    my = _stage("block_maxima", block_maxima, fy, cfg.m, req.band_y)
    ux = _stage("margin", _margin_uniforms, mx, cfg, req.x.fs)
    uy = _stage("margin", _margin_uniforms, my, cfg, req.y.fs)
    return _stage("panel", dvine.build_panel, uy, ux, cfg.k, cfg.ell)


def estimate_from_panel(panel: LaggedPanel, cfg: SteConfig, seed: int = 0, cell: str = "") -> SteEstimate:
    vine = _stage("fit_dvine", dvine.fit_dvine, panel, cfg.families, cfg.select_level)
    out = []
    for direction in DIRECTIONS:
        ss = derive_seed(seed, f"{cell}|{direction}", 0, "observed")
        out.append(_stage("te", dvine.te_from_vine, vine, direction, cfg.n_mc, ss))
    return SteEstimate(out[0], out[1], vine, panel)


def estimate_ste(req: SteRequest) -> SteEstimate:
    """Filter, take block maxima, transform margins, fit the vine, integrate both directions."""
    return estimate_from_panel(prepare_panel(req), req.config, req.seed, req.cell)


# ---------------------------------------------------------------------------
# significance


def null_model(vine: DVineModel, direction: str) -> DVineModel:
    return dvine.null_model(vine, direction)


def pseudo_observations(data: np.ndarray) -> np.ndarray:
    """Column-wise ranks scaled by 1/(n+1)."""
    return stats.rankdata(data, axis=0) / (data.shape[0] + 1)


@dataclass(frozen=True)
class ResampleTest:
    p_value: float
    exceed: int
    used: int
    failures: int
    observed: float
    raw_rule: bool = False
    failure_log: tuple = ()


def _resample_te(null: DVineModel, direction, n, cfg: SteConfig, seed, cell, r) -> float:
    sim = dvine.simulate(null, n, derive_seed(seed, f"{cell}|{direction}", r, "simulate"))
    panel = LaggedPanel(pseudo_observations(sim.data), null.k, null.ell)
    vine = dvine.fit_dvine(panel, cfg.families, cfg.select_level)
    ss = derive_seed(seed, f"{cell}|{direction}", r, "resample_te")
    return dvine.te_from_vine(vine, direction, cfg.n_mc, ss).value


def significance_test(vine: DVineModel, direction: str, observed: float, n: int, cfg: SteConfig,
                      seed: int = 0, cell: str = "") -> ResampleTest:
    """Resampling p-value from the vine with the direction's edges set to independence."""
    direction = dvine.normalize_direction(direction)
    R = cfg.R
    if observed <= 0:
        return ResampleTest(1.0, R, 0, 0, float(observed), cfg.raw_pvalue)
    if R < 1:
        raise ConfigError("need at least one resample")
    null = null_model(vine, direction)
    exceed = used = 0
    failures = []
    for r in range(R):
        try:
            te = _resample_te(null, direction, n, cfg, seed, cell, r)
        except SteError as exc:
            failures.append(f"resample {r}: {exc}")
            continue
        used += 1
        exceed += te >= observed
    if len(failures) > MAX_FAILURE_RATE * R:
        raise NumericalError(f"{len(failures)} of {R} resamples failed")
    if cfg.raw_pvalue:
        p = exceed / used
    else:
        p = (1 + exceed) / (used + 1)
    return ResampleTest(float(p), int(exceed), used, len(failures), float(observed), cfg.raw_pvalue,
                        tuple(failures))


def bh_adjust(pvalues) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values in input order."""
    p = np.asarray(pvalues, dtype=float)
    if p.size == 0:
        return p.copy()
    if p.ndim != 1 or np.any(~(p >= 0)) or np.any(p > 1):
        raise ConfigError("p-values must be a flat sequence inside [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adj = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adj, 1.0)
    return out


# ---------------------------------------------------------------------------
# result table


@dataclass
class SteTestResult:
    source: str
    target: str
    band_source: str
    band_target: str
    direction: str
    estimate: float | None
    p_raw: float | None
    p_adjusted: float | None = None
    exact_zero: bool = False
    raw_estimate: float | None = None
    mc_se: float | None = None
    clamped: bool = False
    resamples_used: int = 0
    resample_failures: int = 0
    vine: list = field(default_factory=list)
    error: str | None = None
    cell: str = ""
    config: dict = field(default_factory=dict)
    seed: int = 0

    def to_dict(self):
        return {
            "pair": [self.source, self.target],
            "band_pair": [self.band_source, self.band_target],
            "direction": self.direction,
            "estimate": self.estimate,
            "p_raw": self.p_raw,
            "p_adjusted": self.p_adjusted,
            "exact_zero": self.exact_zero,
            "raw_estimate": self.raw_estimate,
            "mc_se": self.mc_se,
            "clamped": self.clamped,
            "resamples_used": self.resamples_used,
            "resample_failures": self.resample_failures,
            "vine": self.vine,
            "error": self.error,
            "cell": self.cell,
            "config": self.config,
            "seed": self.seed,
        }


def run_request(req: SteRequest, names=("X", "Y")) -> list[SteTestResult]:
    """Estimate both directions and test each; failures become error rows."""
    cfg = req.config
    common = {"config": cfg.to_dict(), "seed": int(req.seed), "cell": req.cell}
    sides = {X_TO_Y: (names[0], names[1], req.band_x.name, req.band_y.name),
             Y_TO_X: (names[1], names[0], req.band_y.name, req.band_x.name)}
    try:
        est = estimate_ste(req)
    except SteError as exc:
        return [SteTestResult(*sides[d], d, None, None, error=str(exc), **common) for d in DIRECTIONS]
    results = []
    summary = est.vine.summary()
    for d in DIRECTIONS:
        te = est.get(d)
        row = SteTestResult(*sides[d], d, te.value, None, exact_zero=te.exact_zero, raw_estimate=te.raw,
                            mc_se=te.se, clamped=te.clamped, vine=summary, **common)
        try:
            test = significance_test(est.vine, d, te.value, est.panel.n, cfg, req.seed, req.cell)
        except SteError as exc:
            row.error = str(exc)
        else:
            row.p_raw = test.p_value
            row.resamples_used = test.used
            row.resample_failures = test.failures
        results.append(row)
    return results


def _run_cell(args):
    req, names = args
    return req.cell, run_request(req, names)


def band_pairs(bands, spec: str | None = "all"):
    """``all`` gives every ordered pair; otherwise a list of ``(source, target)`` names."""
    if spec in (None, "all"):
        return list(itertools.product(bands, bands))
    return list(spec)


def run_matrix(channels: list[TimeSeries], bands: dict[str, BandSpec], band_pair_list, cfg: SteConfig,
               seed: int = 0, pairs=None, jobs: int = 1) -> list[SteTestResult]:
    """Test every channel pair and band pair in both directions, then apply BH to the whole table."""
    if len(channels) < 2:
        raise ConfigError("need at least two channels")
    labels = [c.label or f"ch{i}" for i, c in enumerate(channels)]
    if len(set(labels)) != len(labels):
        raise ConfigError("channel labels must be unique")
    if pairs is None:
        pairs = list(itertools.combinations(range(len(channels)), 2))
    tasks = []
    for i, j in pairs:
        if i == j:
            raise ConfigError(f"channel pair ({i}, {j}) is not a pair")
        for b1, b2 in band_pair_list:
            cell = f"{labels[i]}|{labels[j]}|{b1}|{b2}"
            req = SteRequest(channels[i], channels[j], bands[b1], bands[b2], cfg, seed, cell)
            tasks.append((req, (labels[i], labels[j])))

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = dict(pool.map(_run_cell, tasks))
    else:
        done = dict(map(_run_cell, tasks))
    # keyed merge keeps the output order independent of scheduling
    rows = [row for req, _ in tasks for row in done[req.cell]]
    apply_bh(rows)
    return rows


def apply_bh(rows: list[SteTestResult]) -> None:
    idx = [i for i, r in enumerate(rows) if r.p_raw is not None]
    adj = bh_adjust([rows[i].p_raw for i in idx])
    for i, a in zip(idx, adj):
        rows[i].p_adjusted = float(max(a, rows[i].p_raw))


def rejection(p: float | None, alpha: float) -> bool:
    return p is not None and not math.isnan(p) and p <= alpha
