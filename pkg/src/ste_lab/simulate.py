"""Ground-truth generator: AR(2) carriers amplitude-modulated by VAR-driven step functions.

Each channel c and band w carries ``Z[c, w] = A[c, w] * phi[c, w]``.  The carrier
``phi`` is built from an AR(2) process peaking inside the band, either taken as is
(``envelope="ar2"``) or reduced to its instantaneous phase, ``sqrt(2) cos(arg h)``
with ``h`` the analytic signal (``envelope="unit"``).  The unit-envelope carrier keeps
the AR(2) spectral peak but leaves all amplitude variation to ``A``.  The amplitude ``A`` is a step
function: level ``b`` is held for a random number of samples drawn from a
discrete uniform distribution.  Levels of all (channel, band) processes follow one
joint first-order recursion

    theta_b = Phi theta_{b-1} + Psi |theta_{b-1}| + e_b

so a same-band link is a linear VAR coefficient in ``Phi`` and a cross-band link
drives the target level with the source magnitude through ``Psi``.  Amplitudes are
``|theta| + offset``.

X and Y draw their interval lengths independently.  By default a channel renews its
levels at its own interval starts, reading the other channel's levels in force at
that instant (``coupling="time"``).  ``coupling="index"`` applies the recursion over
interval index instead, and ``clock="shared"`` gives both channels one set of intervals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import ConfigError, SchemaError
from .signal_lab import BANDS, BandSpec, TimeSeries

CHANNELS = ("X", "Y")
BURN_IN = 1000
LEVEL_BURN_IN = 200
HILBERT_PAD = 256


# ---------------------------------------------------------------------------
# carriers


@dataclass(frozen=True)
class BandOscillatorSpec:
    band: BandSpec
    rho_c: float = 0.95
    freq: float | None = None  # defaults to the band centre
    innovation_sd: float = 1.0
    envelope: str = "ar2"

    def __post_init__(self):
        if self.envelope not in ("ar2", "unit"):
            raise ConfigError(f"carrier envelope must be 'ar2' or 'unit', got {self.envelope!r}")
        if not 0 <= self.rho_c < 1:
            raise ConfigError(f"carrier modulus must lie in [0, 1), got {self.rho_c}")
        if self.freq is not None and not self.band.lo <= self.freq <= self.band.hi:
            raise ConfigError(f"peak frequency {self.freq} outside band {self.band.name}")

    def ar_coefficients(self, fs: float) -> tuple[float, float]:
        f = self.band.center if self.freq is None else self.freq
        return 2 * self.rho_c * math.cos(2 * math.pi * f / fs), -self.rho_c ** 2


def ar2_variance(phi1: float, phi2: float, sd: float = 1.0) -> float:
    return sd * sd * (1 - phi2) / ((1 + phi2) * ((1 - phi2) ** 2 - phi1 ** 2))


def gen_carrier(spec: BandOscillatorSpec, n: int, seed=None, fs: float = 128.0) -> TimeSeries:
    """Stationary AR(2) sample scaled to unit (theoretical) variance."""
    rng = np.random.default_rng(seed)
    spec.band.check(fs)
    phi1, phi2 = spec.ar_coefficients(fs)
    if np.any(np.abs(np.roots([1, -phi1, -phi2])) >= 1):
        raise ConfigError(f"unstable carrier for band {spec.band.name}")
    pad = HILBERT_PAD if spec.envelope == "unit" else 0
    e = rng.normal(scale=spec.innovation_sd, size=n + BURN_IN + 2 * pad)
    z = signal.lfilter([1.0], [1.0, -phi1, -phi2], e)[BURN_IN:]
    if spec.envelope == "unit":
        # padding on both sides keeps the FFT-based Hilbert transform's edge effects out
        z = math.sqrt(2.0) * np.cos(np.angle(signal.hilbert(z)))[pad : pad + n]
    else:
        z /= math.sqrt(ar2_variance(phi1, phi2, spec.innovation_sd))
    return TimeSeries(z, fs, spec.band.name)


# ---------------------------------------------------------------------------
# modulators


@dataclass(frozen=True)
class IntervalLaw:
    """Discrete uniform on ``lo..hi``."""

    lo: int = 29
    hi: int = 35

    def __post_init__(self):
        if int(self.lo) != self.lo or int(self.hi) != self.hi or not 1 <= self.lo <= self.hi:
            raise ConfigError(f"interval bounds must be positive integers with lo <= hi, got {self.lo}, {self.hi}")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def draw(self, size, rng) -> np.ndarray:
        return rng.integers(self.lo, self.hi + 1, size=size)


def var_levels(phi: np.ndarray, psi: np.ndarray | None, sd, n_levels: int, rng, burn_in: int = 200) -> np.ndarray:
    """``(n_levels, K)`` draws of the level recursion started at zero after a burn-in."""
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    K = phi.shape[0]
    psi = np.zeros((K, K)) if psi is None else np.asarray(psi, dtype=float)
    sd = np.broadcast_to(np.asarray(sd, dtype=float), (K,))
    eps = rng.normal(size=(n_levels + burn_in, K)) * sd
    out = np.empty((n_levels + burn_in, K))
    prev = np.zeros(K)
    for b in range(n_levels + burn_in):
        prev = phi @ prev + psi @ np.abs(prev) + eps[b]
        out[b] = prev
    return out[burn_in:]


def step_function(levels: np.ndarray, lengths: np.ndarray, n: int) -> np.ndarray:
    """Hold ``levels[b]`` for ``lengths[b]`` samples, truncated to ``n``."""
    reps = np.repeat(np.arange(len(lengths)), lengths)
    if len(reps) < n:
        raise ConfigError("not enough intervals to cover the series")
    return np.asarray(levels)[reps[:n]]


def clocked_levels(phi: np.ndarray, psi: np.ndarray, sd, owner, clocks: dict, n: int, rng,
                   burn_in: int = 0) -> np.ndarray:
    """Signed level paths ``(K, n)`` when each channel renews its levels on its own clock.

    At every interval start of channel ``c`` the processes owned by ``c`` draw a new
    level from the recursion, using the levels of all processes in force at that
    instant.  Sources on another channel therefore act with a lag measured in time
    rather than in interval index.
    """
    owner = np.asarray(owner)
    K = len(owner)
    sd = np.broadcast_to(np.asarray(sd, dtype=float), (K,))
    total = n + burn_in
    starts = {}
    for ch, lengths in clocks.items():
        ends = np.cumsum(lengths)
        if ends[-1] < total:
            raise ConfigError("not enough intervals to cover the series")
        starts[ch] = np.concatenate([[0], ends[:-1]])
        starts[ch] = starts[ch][starts[ch] < total]
    events = sorted((int(t), ch) for ch, ts in starts.items() for t in ts)

    state = np.zeros(K)
    history = {ch: [] for ch in clocks}
    i = 0
    while i < len(events):
        t = events[i][0]
        group = []
        while i < len(events) and events[i][0] == t:
            group.append(events[i][1])
            i += 1
        new = state.copy()
        for ch in group:
            idx = owner == ch
            new[idx] = phi[idx] @ state + psi[idx] @ np.abs(state) + sd[idx] * rng.normal(size=idx.sum())
            history[ch].append(new[idx])
        state = new

    out = np.empty((K, n))
    for ch, lengths in clocks.items():
        idx = np.flatnonzero(owner == ch)
        lev = np.asarray(history[ch])
        for col, k in enumerate(idx):
            out[k] = step_function(lev[:, col], lengths[: len(lev)], total)[burn_in:]
    return out


@dataclass(frozen=True)
class ModulatorSpec:
    var_coeffs: tuple = ((0.5, 0.0), (0.8, 0.5))  # rows: (theta_X, theta_Y) equations
    innovation_sd: tuple = (0.3, 0.3)
    intervals: IntervalLaw = field(default_factory=IntervalLaw)
    offset: float = 0.5

    def __post_init__(self):
        a = np.asarray(self.var_coeffs, dtype=float)
        if a.shape != (2, 2):
            raise ConfigError("modulator VAR needs a 2x2 coefficient matrix")
        if np.max(np.abs(np.linalg.eigvals(a))) >= 1:
            raise ConfigError("modulator VAR is not stationary")


@dataclass(frozen=True)
class Modulators:
    a_x: np.ndarray
    a_y: np.ndarray
    levels_x: np.ndarray
    levels_y: np.ndarray
    bounds_x: np.ndarray  # cumulative interval ends T_b
    bounds_y: np.ndarray


def gen_modulators(spec: ModulatorSpec, n: int, seed=None) -> Modulators:
    """Two step-function amplitudes with VAR(1)-coupled levels and independent interval clocks."""
    rng = np.random.default_rng(seed)
    n_levels = n // spec.intervals.lo + 2
    levels = var_levels(np.asarray(spec.var_coeffs), None, spec.innovation_sd, n_levels, rng)
    lx = spec.intervals.draw(n_levels, rng)
    ly = spec.intervals.draw(n_levels, rng)
    a_x = step_function(np.abs(levels[:, 0]) + spec.offset, lx, n)
    a_y = step_function(np.abs(levels[:, 1]) + spec.offset, ly, n)
    return Modulators(a_x, a_y, levels[:, 0], levels[:, 1], np.cumsum(lx), np.cumsum(ly))


# ---------------------------------------------------------------------------
# topology and mixing


@dataclass(frozen=True)
class Link:
    source: tuple  # (channel, band)
    target: tuple
    coefficient: float = 0.8

    @property
    def cross_band(self) -> bool:
        return self.source[1] != self.target[1]

    def label(self) -> str:
        return f"{self.source[0]}.{self.source[1]}->{self.target[0]}.{self.target[1]}"


@dataclass(frozen=True)
class CausalTopology:
    links: tuple = ()

    def check(self, bands) -> None:
        for link in self.links:
            for ch, band in (link.source, link.target):
                if ch not in CHANNELS or band not in bands:
                    raise ConfigError(f"link {link.label()} references undefined oscillator {ch}.{band}")
            if link.source[0] == link.target[0]:
                raise ConfigError(f"link {link.label()} stays within one channel")

    def truth(self) -> list[dict]:
        return [{"source": list(l.source), "target": list(l.target), "coefficient": l.coefficient,
                 "kind": "cross-band" if l.cross_band else "same-band"} for l in self.links]


def _links(*spec):
    return tuple(Link(tuple(s.split(".")), tuple(t.split(".")), c) for s, t, c in spec)


CAUSAL_COEF = 1.5
# feedback pairs need a smaller coefficient to keep the level recursion stationary
FEEDBACK_COEF = 0.4

# theta X->Y, gamma X->Y, theta_X -> gamma_Y; delta, beta Y->X, beta_Y -> delta_X; alpha feedback
DEFAULT_TOPOLOGY = CausalTopology(_links(
    ("Y.delta", "X.delta", CAUSAL_COEF),
    ("X.theta", "Y.theta", CAUSAL_COEF),
    ("X.alpha", "Y.alpha", FEEDBACK_COEF),
    ("Y.alpha", "X.alpha", FEEDBACK_COEF),
    ("Y.beta", "X.beta", CAUSAL_COEF),
    ("X.gamma", "Y.gamma", CAUSAL_COEF),
    ("X.theta", "Y.gamma", CAUSAL_COEF),
    ("Y.beta", "X.delta", CAUSAL_COEF),
))


@dataclass(frozen=True)
class MixSpec:
    weights: dict = field(default_factory=lambda: {b: 0.2 for b in BANDS})
    snr: float = 0.95

    def __post_init__(self):
        w = np.array(list(self.weights.values()), dtype=float)
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ConfigError("mixing weights must be non-negative and sum to one")
        if not 0 < self.snr <= 1:
            raise ConfigError("SNR must lie in (0, 1]")

    @property
    def noise_sd(self) -> float:
        signal_var = float(sum(w * w for w in self.weights.values()))
        return math.sqrt(signal_var * (1 - self.snr) / self.snr)


@dataclass(frozen=True)
class SimulationConfig:
    fs: float = 128.0
    n_seconds: float = 30.0
    bands: dict = field(default_factory=lambda: dict(BANDS))
    rho_c: float = 0.99
    intervals: IntervalLaw = field(default_factory=IntervalLaw)
    own_coefficient: float = 0.5
    innovation_sd: float = 1.0
    offset: float = 0.5
    topology: CausalTopology = DEFAULT_TOPOLOGY
    mix: MixSpec = field(default_factory=MixSpec)
    carrier: str = "unit"
    clock: str = "independent"
    coupling: str = "time"

    def __post_init__(self):
        if self.carrier not in ("ar2", "unit"):
            raise ConfigError(f"carrier must be 'ar2' or 'unit', got {self.carrier!r}")
        if self.clock not in ("shared", "independent"):
            raise ConfigError(f"clock must be 'shared' or 'independent', got {self.clock!r}")
        if self.coupling not in ("time", "index"):
            raise ConfigError(f"coupling must be 'time' or 'index', got {self.coupling!r}")
        if self.n_seconds <= 0 or self.fs <= 0:
            raise ConfigError("duration and sampling rate must be positive")

    @property
    def n(self) -> int:
        return int(round(self.n_seconds * self.fs))

    def processes(self) -> list[tuple[str, str]]:
        return [(c, b) for c in CHANNELS for b in self.bands]

    def level_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        procs = self.processes()
        index = {p: i for i, p in enumerate(procs)}
        phi = np.eye(len(procs)) * self.own_coefficient
        psi = np.zeros_like(phi)
        for link in self.topology.links:
            i, j = index[link.target], index[link.source]
            (psi if link.cross_band else phi)[i, j] += link.coefficient
        return phi, psi

    def to_dict(self):
        return {
            "fs": self.fs,
            "n_seconds": self.n_seconds,
            "bands": {k: [b.lo, b.hi] for k, b in self.bands.items()},
            "rho_c": self.rho_c,
            "intervals": [self.intervals.lo, self.intervals.hi],
            "own_coefficient": self.own_coefficient,
            "innovation_sd": self.innovation_sd,
            "offset": self.offset,
            "links": [{"source": ".".join(l.source), "target": ".".join(l.target), "coefficient": l.coefficient}
                      for l in self.topology.links],
            "weights": dict(self.mix.weights),
            "snr": self.mix.snr,
            "carrier": self.carrier,
            "clock": self.clock,
            "coupling": self.coupling,
        }

    @classmethod
    def from_dict(cls, d):
        validate_config(d)
        bands = {k: BandSpec(k, float(v[0]), float(v[1])) for k, v in d["bands"].items()}
        links = tuple(Link(tuple(l["source"].split(".")), tuple(l["target"].split(".")), float(l["coefficient"]))
                      for l in d["links"])
        return cls(float(d["fs"]), float(d["n_seconds"]), bands, float(d["rho_c"]),
                   IntervalLaw(*map(int, d["intervals"])), float(d["own_coefficient"]),
                   float(d["innovation_sd"]), float(d["offset"]), CausalTopology(links),
                   MixSpec(dict(d["weights"]), float(d["snr"])), d["carrier"], d["clock"], d["coupling"])


CONFIG_SCHEMA = {
    "type": "object",
    "required": ["fs", "n_seconds", "bands", "rho_c", "intervals", "own_coefficient", "innovation_sd",
                 "offset", "links", "weights", "snr", "carrier", "clock", "coupling"],
    "additionalProperties": False,
    "properties": {
        "fs": {"type": "number", "exclusiveMinimum": 0},
        "n_seconds": {"type": "number", "exclusiveMinimum": 0},
        "bands": {"type": "object", "minProperties": 1,
                  "additionalProperties": {"type": "array", "items": {"type": "number"},
                                           "minItems": 2, "maxItems": 2}},
        "rho_c": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "intervals": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
        "own_coefficient": {"type": "number"},
        "innovation_sd": {"type": "number", "exclusiveMinimum": 0},
        "offset": {"type": "number", "minimum": 0},
        "links": {"type": "array", "items": {
            "type": "object", "required": ["source", "target", "coefficient"], "additionalProperties": False,
            "properties": {"source": {"type": "string", "pattern": r"^[XY]\.\w+$"},
                           "target": {"type": "string", "pattern": r"^[XY]\.\w+$"},
                           "coefficient": {"type": "number"}}}},
        "weights": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
        "snr": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "carrier": {"enum": ["ar2", "unit"]},
        "clock": {"enum": ["shared", "independent"]},
        "coupling": {"enum": ["time", "index"]},
    },
}


def validate_config(d) -> None:
    import jsonschema

    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(d), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        pointer = "/" + "/".join(str(p) for p in err.absolute_path)
        raise SchemaError(err.message, pointer)
    if set(d["weights"]) != set(d["bands"]):
        raise SchemaError("weights must name exactly the configured bands", "/weights")


# ---------------------------------------------------------------------------
# channel pair


@dataclass(frozen=True)
class SimulatedPair:
    x: TimeSeries
    y: TimeSeries
    truth: list
    components: dict  # (channel, band) -> Z
    amplitudes: dict  # (channel, band) -> A


def gen_channel_pair(cfg: SimulationConfig = SimulationConfig(), seed=None) -> SimulatedPair:
    """Simulate the two observed channels and return them with the ground-truth links."""
    cfg.topology.check(cfg.bands)
    for band in cfg.bands.values():
        band.check(cfg.fs)
    n = cfg.n
    procs = cfg.processes()
    phi, psi = cfg.level_matrices()
    if np.max(np.abs(np.linalg.eigvals(phi + np.abs(psi)))) >= 1:
        raise ConfigError("level recursion is not stationary; reduce the coupling coefficients")

    if isinstance(seed, np.random.SeedSequence):
        # a fresh copy, so spawning below never depends on what the caller spawned before
        root = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    else:
        root = np.random.SeedSequence(seed)
    s_levels, s_clock, s_carriers, s_noise = root.spawn(4)
    rng_levels = np.random.default_rng(s_levels)
    rng_clock = np.random.default_rng(s_clock)
    # bands of one channel always share its clock; channels share one only if asked
    def draw_clocks(n_levels):
        if cfg.clock == "shared":
            lengths = cfg.intervals.draw(n_levels, rng_clock)
            return {c: lengths for c in CHANNELS}
        return {c: cfg.intervals.draw(n_levels, rng_clock) for c in CHANNELS}

    if cfg.coupling == "time":
        burn = LEVEL_BURN_IN * cfg.intervals.hi
        clocks = draw_clocks((n + burn) // cfg.intervals.lo + 2)
        paths = clocked_levels(phi, psi, cfg.innovation_sd, [c for c, _ in procs], clocks, n,
                               rng_levels, burn)
    else:
        n_levels = n // cfg.intervals.lo + 2
        clocks = draw_clocks(n_levels)
        levels = var_levels(phi, psi, cfg.innovation_sd, n_levels, rng_levels)
        paths = np.stack([step_function(levels[:, i], clocks[c], n) for i, (c, _) in enumerate(procs)])

    carrier_seeds = s_carriers.spawn(len(procs))
    comps, amps = {}, {}
    for idx, (ch, band) in enumerate(procs):
        spec = BandOscillatorSpec(cfg.bands[band], cfg.rho_c, envelope=cfg.carrier)
        carrier = gen_carrier(spec, n, carrier_seeds[idx], cfg.fs).values
        a = np.abs(paths[idx]) + cfg.offset
        z = a * carrier
        comps[(ch, band)] = z / z.std()
        amps[(ch, band)] = a

    rng_noise = np.random.default_rng(s_noise)
    out = {}
    for ch in CHANNELS:
        mix = sum(cfg.mix.weights[b] * comps[(ch, b)] for b in cfg.bands)
        out[ch] = TimeSeries(mix + cfg.mix.noise_sd * rng_noise.normal(size=n), cfg.fs, ch)
    return SimulatedPair(out["X"], out["Y"], cfg.topology.truth(), comps, amps)


def single_link_config(band: str = "theta", direction: str = "X->Y", **kwargs) -> SimulationConfig:
    """Only one same-band link, everything else independent."""
    src, dst = ("X", "Y") if direction.replace(" ", "").upper() == "X->Y" else ("Y", "X")
    topo = CausalTopology((Link((src, band), (dst, band), CAUSAL_COEF),))
    return SimulationConfig(topology=topo, **kwargs)


def null_config(**kwargs) -> SimulationConfig:
    return SimulationConfig(topology=CausalTopology(()), **kwargs)
