"""Optical pulse metrology and the steady-state acousto-optic Bragg reflectance.

Rise and fall times follow the oscilloscope 10 %-90 % convention with
linear interpolation between samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# samples skipped between the baseline and the start of the edge
EDGE_GUARD = 10


@dataclass
class PulseTrace:
    sample_period: float
    samples: np.ndarray
    nominal_pulse_width: Optional[float] = None
    t0: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or len(self.samples) < 50:
            raise ValueError("pulse trace needs at least 50 samples")
        if not (self.sample_period > 0):
            raise ValueError("sample period must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("non-finite samples in trace")

    @property
    def time(self) -> np.ndarray:
        return self.t0 + self.sample_period * np.arange(len(self.samples))

    @classmethod
    def from_times(cls, t, samples, **kw) -> "PulseTrace":
        """Build a trace from explicit, uniformly spaced sample times."""
        t = np.asarray(t, dtype=float)
        if len(t) < 2:
            raise ValueError("need at least two sample times")
        dt = np.diff(t)
        period = float((t[-1] - t[0]) / (len(t) - 1))
        if period <= 0 or np.max(np.abs(dt - period)) > 1e-6 * period:
            raise ValueError("sample times are not uniformly spaced")
        return cls(period, samples, t0=float(t[0]), **kw)


@dataclass
class PulseMetrics:
    rise_time: float
    fall_time: float
    on_level: float
    off_level: float
    extinction_ratio: float
    ripple_rms_fraction: float
    width: float
    transmittance: Optional[float] = None
    warnings: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)


def _cross_up(y, i, level, forward=True):
    """Fractional index where ``y`` crosses ``level`` moving away from index ``i``.

    ``forward=True`` searches ``i, i+1, ...`` for the first sample at or above
    ``level``; ``forward=False`` searches backwards for the last sample
    below it.  Returns ``None`` if there is no crossing.
    """
    n = len(y)
    if forward:
        j = i
        while j < n and y[j] < level:
            j += 1
        if j >= n:
            return None
        if j == 0:
            return 0.0
        k0, k1 = j - 1, j
    else:
        j = i
        while j >= 0 and y[j] >= level:
            j -= 1
        if j < 0:
            return None
        k0, k1 = j, j + 1
        if k1 >= n:
            return float(k0)
    y0, y1 = y[k0], y[k1]
    if y1 == y0:
        return float(k0)
    return k0 + (level - y0) / (y1 - y0)


def _edge_times(y, mid_index, lo_level, hi_level):
    """(t10, t90) fractional indices around a rising 50 % crossing at ``mid_index``."""
    t10 = _cross_up(y, mid_index, lo_level, forward=False)
    t90 = _cross_up(y, mid_index, hi_level, forward=True)
    return t10, t90


def analyze_pulse(trace: PulseTrace, input_power: Optional[float] = None) -> PulseMetrics:
    """Rise/fall times, on/off levels, extinction ratio and ripple of a single pulse.

    ``on_level`` is the mean of the central half of the settled plateau and
    ``off_level`` the mean of the pre-pulse baseline up to ``EDGE_GUARD``
    samples before the edge leaves the baseline.  The plateau is taken to
    start one rise time after the rising 90 % crossing (and end one fall
    time before the falling 90 % crossing) so the edge shoulders do not leak
    into the ripple figure.
    """
    y = trace.samples
    dt = trace.sample_period
    warnings = []
    flags = {}
    lo_est = float(np.percentile(y, 5))
    hi_est = float(np.percentile(y, 95))
    if not hi_est > lo_est:
        raise ValueError("trace has no pulse (flat signal)")
    mid = 0.5 * (lo_est + hi_est)
    above = y >= mid
    change = np.nonzero(above[1:] != above[:-1])[0] + 1
    rising = [i for i in change if above[i]]
    falling = [i for i in change if not above[i]]
    if not rising or not falling:
        raise ValueError("no complete pulse: missing a rising or falling 50 % crossing")
    if len(rising) > 1 or len(falling) > 1:
        raise ValueError(f"multiple pulses in trace ({len(rising)} rising, {len(falling)} falling edges)")
    r_mid, f_mid = rising[0], falling[0]
    if f_mid <= r_mid:
        raise ValueError("trace starts inside the pulse; need a baseline before the rising edge")

    # first pass on levels, then refine once with the edge positions known
    pre = y[:r_mid]
    b0 = float(np.median(pre[: max(len(pre) // 2, 1)]))
    noise = 1.4826 * float(np.median(np.abs(pre[: max(len(pre) // 2, 1)] - b0)))
    thresh = b0 + max(3.0 * noise, 0.01 * abs(b0), 1e-12 * (hi_est - lo_est))
    start = r_mid - 1
    while start > 0 and y[start] > thresh:
        start -= 1
    base_end = start - EDGE_GUARD
    if base_end < 1:
        raise ValueError("not enough baseline before the rising edge")
    off = float(np.mean(y[:base_end]))

    plateau_rough = y[r_mid:f_mid]
    q = len(plateau_rough) // 4
    on = float(np.mean(plateau_rough[q: len(plateau_rough) - q])) if q > 0 else float(np.mean(plateau_rough))

    span = on - off
    if span <= 0:
        raise ValueError("on level does not exceed off level")
    l10 = off + 0.1 * span
    l90 = off + 0.9 * span
    r10, r90 = _edge_times(y, r_mid, l10, l90)
    # falling edge: mirror the trace so the same crossing search applies
    yr = y[::-1]
    fm = len(y) - f_mid
    f10r, f90r = _edge_times(yr, fm, l10, l90)
    if None in (r10, r90, f10r, f90r):
        raise ValueError("could not locate 10 %/90 % crossings")
    f10 = len(y) - 1 - f10r
    f90 = len(y) - 1 - f90r
    rise = (r90 - r10) * dt
    fall = (f10 - f90) * dt

    p_start = int(math.ceil(r90 + (r90 - r10)))
    p_end = int(math.floor(f90 - (f10 - f90)))
    plateau = y[p_start: p_end + 1]
    if len(plateau) < 20:
        raise ValueError(f"plateau too short ({len(plateau)} samples, need 20)")
    q = len(plateau) // 4
    on = float(np.mean(plateau[q: len(plateau) - q]))
    first = plateau[: max(q, 1)]
    ripple = float(np.sqrt(np.mean((first - on) ** 2)) / on) if on != 0 else float("inf")

    if off <= 0:
        er = math.inf
        flags["extinction_ratio_undefined"] = True
        warnings.append("off level is not positive; extinction ratio reported as infinite")
    else:
        er = on / off
        flags["extinction_ratio_undefined"] = False
    width = (f_mid - r_mid) * dt
    if trace.nominal_pulse_width and abs(width - trace.nominal_pulse_width) > 0.1 * trace.nominal_pulse_width:
        warnings.append("measured pulse width deviates by more than 10 % from nominal")
    transmittance = None
    if input_power is not None:
        if not input_power > 0:
            raise ValueError("input power reference must be positive")
        transmittance = on / input_power
    return PulseMetrics(rise, fall, on, off, er, ripple, width, transmittance, warnings, flags)


# -- acousto-optic modulator -----------------------------------------------------

@dataclass(frozen=True)
class AomConfig:
    acoustic_wavelength: float
    optical_wavelength: float
    interaction_length: float
    max_reflectance: float = 1.0
    acoustic_frequency: float = 0.0  # rad/s; enters only the phase factor

    def __post_init__(self):
        if not (self.acoustic_wavelength > 0 and self.optical_wavelength > 0 and self.interaction_length > 0):
            raise ValueError("wavelengths and interaction length must be positive")
        if not (0 < self.max_reflectance <= 1):
            raise ValueError("max_reflectance must lie in (0, 1]")

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.optical_wavelength

    @property
    def q(self) -> float:
        return 2.0 * math.pi / self.acoustic_wavelength


def bragg_angle(acoustic_wavelength: float, optical_wavelength: float) -> float:
    """Angle solving ``2 Lambda sin(theta) = lambda``."""
    if not (acoustic_wavelength > 0 and optical_wavelength > 0):
        raise ValueError("wavelengths must be positive")
    ratio = optical_wavelength / (2.0 * acoustic_wavelength)
    if ratio > 1.0:
        raise ValueError("optical wavelength exceeds twice the acoustic wavelength: no Bragg solution")
    return math.asin(ratio)


def sinc_argument(cfg: AomConfig, theta, branch: int = 1):
    theta = np.asarray(theta, dtype=float)
    return (2.0 * cfg.k * np.sin(theta) - branch * cfg.q) * cfg.interaction_length / (2.0 * math.pi)


def reflectance_magnitude(cfg: AomConfig, theta, branch: int = 1):
    """``|r_+-| = r0 |sinc((2k sin(theta) -+ q) L / 2pi)|`` with normalised sinc."""
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    out = cfg.max_reflectance * np.abs(np.sinc(sinc_argument(cfg, theta, branch)))
    return float(out) if np.ndim(out) == 0 else out


def first_null_angle(cfg: AomConfig, branch: int = 1) -> float:
    """Angle above the Bragg peak where the sinc argument reaches 1."""
    s = (branch * cfg.q + 2.0 * math.pi / cfg.interaction_length) / (2.0 * cfg.k)
    if abs(s) > 1:
        raise ValueError("first null is beyond grazing incidence")
    return math.asin(s)
