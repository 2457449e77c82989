"""Frequency bands and Butterworth band-pass extraction of oscillations."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import DataError, DesignError, InvalidBandError, TooShortError


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled real signal."""

    values: np.ndarray
    fs: float
    label: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise DataError(f"{self.label or 'series'}: values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise DataError(f"{self.label or 'series'}: non-finite value at index {bad}")
        if not self.fs > 0:
            raise DataError(f"sampling rate must be positive, got {self.fs}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.fs


@dataclass(frozen=True)
class BandSpec:
    name: str
    lo: float
    hi: float

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise InvalidBandError(f"band {self.name}: need 0 < lo < hi, got {self.lo}..{self.hi}")

    def check(self, fs: float) -> None:
        if self.hi >= fs / 2:
            raise InvalidBandError(
                f"band {self.name} ({self.lo}-{self.hi} Hz) reaches the Nyquist frequency {fs / 2} Hz"
            )

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def to_dict(self):
        return {"name": self.name, "lo": self.lo, "hi": self.hi}


# Gamma stops at 45 Hz so that it stays below Nyquist at 128 Hz.
BANDS = {
    "delta": BandSpec("delta", 0.5, 4.0),
    "theta": BandSpec("theta", 4.0, 8.0),
    "alpha": BandSpec("alpha", 8.0, 12.0),
    "beta": BandSpec("beta", 12.0, 30.0),
    "gamma": BandSpec("gamma", 30.0, 45.0),
}


def parse_band(text: str, registry: dict[str, BandSpec] | None = None) -> BandSpec:
    """Resolve a preset name, ``lo:hi`` or ``name=lo:hi`` into a band."""
    registry = BANDS if registry is None else registry
    text = text.strip()
    if text in registry:
        return registry[text]
    name = None
    if "=" in text:
        name, text = text.split("=", 1)
    try:
        lo, hi = (float(p) for p in text.split(":"))
    except ValueError:
        raise InvalidBandError(f"unknown band {text!r}") from None
    return BandSpec(name or f"{lo:g}-{hi:g}", lo, hi)


@dataclass(frozen=True)
class FilterSpec:
    band: BandSpec
    order: int = 4
    zero_phase: bool = True

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise InvalidBandError(f"filter order must be a positive integer, got {self.order}")


@dataclass(frozen=True)
class DigitalFilter:
    """Cascade of second-order sections, rows ``[b0, b1, b2, a0, a1, a2]``."""

    sos: np.ndarray
    fs: float
    spec: FilterSpec = field(compare=False)

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots(sec[3:]) for sec in self.sos])


def design_butterworth(spec: FilterSpec, fs: float) -> DigitalFilter:
    """Band-pass Butterworth design; ``order`` is the low-pass prototype order."""
    spec.band.check(fs)
    sos = signal.butter(spec.order, [spec.band.lo, spec.band.hi], btype="bandpass", fs=fs, output="sos")
    filt = DigitalFilter(np.ascontiguousarray(sos), fs, spec)
    if not np.all(np.abs(filt.poles()) < 1.0):
        raise DesignError(f"unstable Butterworth design for band {spec.band.name} at fs={fs}")
    return filt


def filter_band(x: TimeSeries, spec: FilterSpec) -> TimeSeries:
    filt = design_butterworth(spec, x.fs)
    pad = 3 * spec.order
    if len(x) < pad + 1:
        raise TooShortError(f"{x.label or 'series'}: {len(x)} samples is too short for order {spec.order}")
    if spec.zero_phase:
        y = signal.sosfiltfilt(filt.sos, x.values, padtype="even", padlen=pad)
    else:
        y = signal.sosfilt(filt.sos, x.values)
    return TimeSeries(y, x.fs, f"{x.label}[{spec.band.name}]" if x.label else spec.band.name)
