"""Replicated simulation studies: rejection proportions for STE and the Wald-Granger test."""
from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .dvine import DIRECTIONS, X_TO_Y
from .engine import SteConfig, SteRequest, derive_seed, rejection, run_request
from .errors import ConfigError, SteError
from .granger import fit_var, wald_gc_test
from .signal_lab import FilterSpec, filter_band
from .simulate import IntervalLaw, SimulationConfig, gen_channel_pair

EXPERIMENTS = ("table2", "table3", "table4")
DEFAULT_ETA = {"table2": (32, 64), "table3": (32,), "table4": (64,)}
# (band of X, band of Y); each pair is tested in both directions
TABLE_BAND_PAIRS = (
    ("delta", "delta"), ("theta", "theta"), ("alpha", "alpha"), ("beta", "beta"),
    ("gamma", "gamma"), ("delta", "beta"), ("theta", "gamma"),
)
COLUMNS = ["experiment", "method", "link", "band_source", "band_target", "direction", "simulated",
           "eta", "n_seconds", "m", "order", "replicates", "errors", "rejections", "proportion",
           "mean_estimate"]


def interval_law(eta: int, half_width: int = 3) -> IntervalLaw:
    return IntervalLaw(eta - half_width, eta + half_width)


@dataclasses.dataclass(frozen=True)
class Study:
    experiment: str
    replicates: int = 100
    etas: tuple = ()
    n_seconds: tuple = (30.0,)
    block_sizes: tuple = (32, 64)
    orders: tuple = (1,)  # k = l for STE, VAR order for WGC
    band_pairs: tuple = TABLE_BAND_PAIRS
    R: int = 200
    n_mc: int = 10_000
    alpha: float = 0.05
    seed: int = 0
    base: SimulationConfig = SimulationConfig()

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.replicates < 10:
            raise ConfigError("need at least 10 replicates")
        if not self.etas:
            object.__setattr__(self, "etas", DEFAULT_ETA[self.experiment])
        if self.experiment == "table2" and self.orders == (1,):
            object.__setattr__(self, "orders", (2, 5))

    @property
    def method(self) -> str:
        return "wgc" if self.experiment == "table2" else "ste"

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["base"] = self.base.to_dict()
        return d


def _truth(cfg: SimulationConfig) -> set:
    return {(l.source, l.target) for l in cfg.topology.links}


def _replicate(args):
    study, eta, n_sec, rep = args
    cfg = dataclasses.replace(study.base, intervals=interval_law(eta), n_seconds=n_sec)
    cell = f"{study.experiment}|eta={eta}|N={n_sec:g}"
    sim_seed = derive_seed(study.seed, cell, rep, "simulate")
    pair = gen_channel_pair(cfg, sim_seed)
    out = {}
    for bx, by in study.band_pairs:
        if study.method == "wgc":
            fx = filter_band(pair.x, FilterSpec(cfg.bands[bx]))
            fy = filter_band(pair.y, FilterSpec(cfg.bands[by]))
            for p in study.orders:
                try:
                    model = fit_var(fx, fy, p)
                    for d in DIRECTIONS:
                        out[(bx, by, d, None, p)] = (wald_gc_test(model, d)[1], None)
                except SteError:
                    for d in DIRECTIONS:
                        out[(bx, by, d, None, p)] = (None, None)
            continue
        for m in study.block_sizes:
            for p in study.orders:
                ste = SteConfig(m=m, k=p, ell=p, segment_seconds=None, R=study.R, n_mc=study.n_mc)
                req = SteRequest(pair.x, pair.y, cfg.bands[bx], cfg.bands[by], ste,
                                 seed=int(sim_seed.generate_state(1)[0]), cell=f"{cell}|{bx}|{by}|m={m}|p={p}")
                for row in run_request(req):
                    out[(bx, by, row.direction, m, p)] = (row.p_raw, row.estimate)
    return (eta, n_sec, rep), out


def run_replicates(study: Study, replicates=None, jobs: int = 1) -> dict:
    """Per-replicate outcomes keyed by ``(eta, N, rep)``.

    Each value maps ``(band_x, band_y, direction, m, order)`` to ``(p_value, estimate)``;
    ``p_value`` is None when the replicate failed.
    """
    reps = range(study.replicates) if replicates is None else replicates
    tasks = [(study, eta, float(n), rep) for eta in study.etas for n in study.n_seconds for rep in reps]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return dict(pool.map(_replicate, tasks, chunksize=1))
    return dict(map(_replicate, tasks))


def run_study(study: Study, jobs: int = 1) -> list[dict]:
    """Rejection proportion per (band pair, direction, eta, N, m, order) cell."""
    done = run_replicates(study, jobs=jobs)

    truth = _truth(study.base)
    rows = []
    block_sizes = (None,) if study.method == "wgc" else study.block_sizes
    for eta in study.etas:
        for n_sec in study.n_seconds:
            reps = [done[(eta, float(n_sec), r)] for r in range(study.replicates)]
            for bx, by in study.band_pairs:
                for d in DIRECTIONS:
                    src, dst = (("X", bx), ("Y", by)) if d == X_TO_Y else (("Y", by), ("X", bx))
                    for m in block_sizes:
                        for p in study.orders:
                            vals = [rep[(bx, by, d, m, p)] for rep in reps]
                            ok = [v for v in vals if v[0] is not None]
                            hits = sum(rejection(pv, study.alpha) for pv, _ in ok)
                            est = [e for _, e in ok if e is not None]
                            rows.append({
                                "experiment": study.experiment, "method": study.method,
                                "link": f"{src[0]}.{src[1]}->{dst[0]}.{dst[1]}",
                                "band_source": src[1], "band_target": dst[1], "direction": d,
                                "simulated": (src, dst) in truth, "eta": eta, "n_seconds": float(n_sec),
                                "m": m, "order": p, "replicates": len(vals),
                                "errors": len(vals) - len(ok), "rejections": hits,
                                "proportion": hits / len(ok) if ok else None,
                                "mean_estimate": float(np.mean(est)) if est else None,
                            })
    return rows
