"""Fluorescence saturation, polarization response and emission-spectrum checks."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from .fitcore import FitError, FitResult, LinearFit, ModelFunction, fit_linear, fit_nonlinear

log = logging.getLogger(__name__)

ZPL_WINDOW = (630.0, 645.0)
NV0_BAND = (550.0, 600.0)
TOTAL_BAND = (550.0, 850.0)
DEFAULT_NV0_THRESHOLD = 0.05


# -- saturation ----------------------------------------------------------------

@dataclass
class SaturationCurve:
    power: np.ndarray
    counts: np.ndarray
    background_power: Optional[np.ndarray] = None
    background_counts: Optional[np.ndarray] = None

    def __post_init__(self):
        self.power = np.asarray(self.power, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.power.shape != self.counts.shape or self.power.ndim != 1:
            raise ValueError("power and counts must be 1-D arrays of equal length")
        if len(self.power) < 5:
            raise ValueError("saturation curve needs at least 5 points")
        if np.any(self.power < 0) or np.any(np.diff(self.power) <= 0):
            raise ValueError("powers must be non-negative and strictly increasing")
        if (self.background_power is None) != (self.background_counts is None):
            raise ValueError("background powers and counts must be given together")
        if self.background_power is not None:
            self.background_power = np.asarray(self.background_power, dtype=float)
            self.background_counts = np.asarray(self.background_counts, dtype=float)
            if self.background_power.shape != self.background_counts.shape:
                raise ValueError("background powers and counts differ in length")


@dataclass
class SaturationFit:
    a: float
    p_sat: float
    b: float
    a_error: float
    p_sat_error: float
    b_error: float
    background: Optional[LinearFit] = None
    fit: Optional[FitResult] = field(default=None, repr=False)
    warnings: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.fit is None or self.fit.converged

    def __call__(self, power):
        return saturation_curve(power, self.a, self.p_sat, self.b)


def saturation_curve(power, a, p_sat, b=0.0):
    """Detected rate ``a P/(P_sat + P) + b P``."""
    p = np.asarray(power, dtype=float)
    return a * p / (p_sat + p) + b * p


def _saturation_model(with_background: bool) -> ModelFunction:
    if with_background:
        def evaluate(p, x):
            return saturation_curve(x, p[0], p[1], p[2])

        def jacobian(p, x):
            a, ps, _ = p
            d = ps + x
            return np.column_stack([x / d, -a * x / (d * d), x])

        return ModelFunction(evaluate, 3, jacobian, ("a", "p_sat", "b"))

    def evaluate2(p, x):
        return saturation_curve(x, p[0], p[1])

    def jacobian2(p, x):
        a, ps = p
        d = ps + x
        return np.column_stack([x / d, -a * x / (d * d)])

    return ModelFunction(evaluate2, 2, jacobian2, ("a", "p_sat"))


def subtract_background(power, counts, background: LinearFit):
    """Remove a linear background; returns ``(corrected, any_negative)``."""
    corrected = np.asarray(counts, dtype=float) - background(power)
    return corrected, bool(np.any(corrected < 0))


def saturation_guess(power, counts, with_background: bool = True):
    p = np.asarray(power, dtype=float)
    c = np.asarray(counts, dtype=float)
    cmax = float(c.max())
    a = 2.0 * cmax
    half = 0.5 * cmax
    i = int(np.argmax(c >= half))
    if i == 0:
        ps = float(p[0]) if p[0] > 0 else float(p[1])
    else:
        c0, c1 = c[i - 1], c[i]
        ps = float(p[i - 1] + (half - c0) * (p[i] - p[i - 1]) / (c1 - c0)) if c1 != c0 else float(p[i])
    ps = max(ps, 1e-12 * float(p.max()))
    if not with_background:
        return a, ps
    tail = (c[-1] - c[-2]) / (p[-1] - p[-2])
    sat_slope = a * ps / (ps + p[-1]) ** 2
    return a, ps, max(float(tail - sat_slope), 0.0)


def fit_saturation(
    curve: SaturationCurve,
    *,
    weighting: str = "relative",
    tol: float = 1e-10,
    max_iter: int = 200,
) -> SaturationFit:
    """Fit the saturation law.

    With background points the background is fitted as a line, subtracted,
    and the linear term ``b`` is held at zero; otherwise ``a``, ``P_sat``
    and ``b`` are fitted jointly.

    ``weighting="relative"`` assumes noise proportional to the signal and
    refits with weights ``1/model^2`` taken from the previous pass;
    ``"uniform"`` is plain least squares.  Either way the covariance is
    scaled by the reduced chi-square.
    """
    if weighting not in ("uniform", "relative"):
        raise ValueError(f"unknown weighting {weighting!r}")
    warnings = []
    flags = {}
    power = curve.power
    counts = curve.counts
    background = None
    if curve.background_power is not None:
        background = fit_linear(curve.background_power, curve.background_counts)
        counts, negative = subtract_background(power, counts, background)
        flags["negative_after_subtraction"] = negative
        if negative:
            warnings.append("background-subtracted counts contain negative values")
        bmin, bmax = curve.background_power.min(), curve.background_power.max()
        if power.min() < bmin or power.max() > bmax:
            warnings.append("background fit extrapolated beyond its measured power range")
    joint = background is None
    model = _saturation_model(joint)
    res = fit_nonlinear(model, power, counts, saturation_guess(power, counts, joint), tol=tol, max_iter=max_iter)
    if weighting == "relative":
        res = _reweighted(model, power, counts, res, tol, max_iter)
    if not res.converged:
        warnings.append(f"saturation fit did not converge: {res.message}")
    a, ps = (float(v) for v in res.parameters[:2])
    ea, eps = (float(v) for v in res.standard_errors[:2])
    b, eb = (float(res.parameters[2]), float(res.standard_errors[2])) if joint else (0.0, 0.0)
    flags["b_negative"] = bool(b < 0)
    if b < 0:
        warnings.append("fitted linear background coefficient is negative")
    flags["extrapolated_p_sat"] = bool(not (power.min() <= ps <= power.max()))
    if flags["extrapolated_p_sat"]:
        warnings.append("saturation power lies outside the sampled power range")
    elif power.max() < 1.5 * ps:
        warnings.append("maximum power is below 1.5 x P_sat; saturation poorly constrained")
    return SaturationFit(a, ps, b, ea, eps, eb, background, res, warnings, flags)


def _reweighted(model, x, y, res, tol, max_iter, passes=3):
    """Iteratively reweighted refits with ``w = 1/model^2`` (floored at 1e-3 of the peak)."""
    for _ in range(passes):
        if not res.converged:
            break
        pred = np.abs(model(res.parameters, x))
        floor = 1e-3 * float(pred.max()) if pred.max() > 0 else 1.0
        w = 1.0 / np.maximum(pred, floor) ** 2
        res = fit_nonlinear(model, x, y, res.parameters, w / w.max(), tol=tol, max_iter=max_iter, absolute_weights=False)
    return res


# -- polarization ---------------------------------------------------------------

@dataclass
class PolarizationSweep:
    angle: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.angle = np.asarray(self.angle, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.angle.shape != self.counts.shape or self.angle.ndim != 1:
            raise ValueError("angles and counts must be 1-D arrays of equal length")
        if len(self.angle) < 8:
            raise ValueError("polarization sweep needs at least 8 points")
        if not np.all(np.isfinite(self.angle)) or not np.all(np.isfinite(self.counts)):
            raise ValueError("non-finite sweep values")


@dataclass
class PolarizationFit:
    offset: float
    amplitude: float
    max_angle: float
    offset_error: float
    amplitude_error: float
    max_angle_error: float
    fit: Optional[FitResult] = field(default=None, repr=False)
    warnings: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    @property
    def visibility(self) -> float:
        return self.amplitude / self.offset

    @property
    def converged(self) -> bool:
        return self.fit is None or self.fit.converged

    def __call__(self, angle):
        return polarization_response(angle, self.offset, self.amplitude, self.max_angle)


def polarization_response(angle, offset, amplitude, max_angle):
    """Half-wave-plate response ``C0 + C1 cos(4 (a' - a'_max))``, angles in degrees.

    The plate turns the polarization by twice its angle and the dipole
    absorption is a cos^2 of that, hence the factor 4 and the 90 deg period.
    """
    a = np.asarray(angle, dtype=float)
    return offset + amplitude * np.cos(np.deg2rad(4.0 * (a - max_angle)))


_K = math.pi / 45.0  # d(4*deg2rad(a))/da


def _polarization_model() -> ModelFunction:
    def evaluate(p, x):
        return polarization_response(x, p[0], p[1], p[2])

    def jacobian(p, x):
        ph = np.deg2rad(4.0 * (x - p[2]))
        return np.column_stack([np.ones_like(x), np.cos(ph), p[1] * _K * np.sin(ph)])

    return ModelFunction(evaluate, 3, jacobian, ("offset", "amplitude", "max_angle"))


def _principal(angle: float) -> float:
    a = math.fmod(angle, 90.0)
    if a < 0:
        a += 90.0
    return 0.0 if a >= 90.0 else a


def fit_polarization(sweep: PolarizationSweep, *, tol: float = 1e-10, max_iter: int = 200) -> PolarizationFit:
    """Fit offset, amplitude and angle of maximum emission of a waveplate sweep.

    The maximum angle is returned as the principal value in [0, 90) degrees.
    A linear harmonic fit provides the start point; if its amplitude is not
    significant the sweep is flagged flat and the angle is meaningless.
    """
    ang = sweep.angle
    c = sweep.counts
    warnings = []
    flags = {}
    if np.ptp(ang) < 90.0 - 1e-9:
        warnings.append("sweep spans less than 90 degrees of waveplate angle")
    ph = np.deg2rad(4.0 * ang)
    design = np.column_stack([np.ones_like(ang), np.cos(ph), np.sin(ph)])
    coef, *_ = np.linalg.lstsq(design, c, rcond=None)
    c0, ca, cb = coef
    amp = math.hypot(ca, cb)
    n = len(c)
    resid = c - design @ coef
    s2 = float(resid @ resid) / max(n - 3, 1)
    cov_lin = s2 * np.linalg.pinv(design.T @ design)
    amp_err = math.sqrt(max(cov_lin[1, 1], cov_lin[2, 2]))
    flat = amp <= 2.0 * amp_err or amp <= 1e-9 * abs(c0)
    flags["flat_response"] = bool(flat)
    if flat:
        warnings.append("amplitude consistent with zero; dipole aligned with beam, max angle undefined")
        return PolarizationFit(
            float(c0), float(amp), float("nan"), math.sqrt(cov_lin[0, 0]), amp_err, float("nan"),
            None, warnings, flags,
        )
    start = [c0, amp, math.degrees(math.atan2(cb, ca)) / 4.0]
    res = fit_nonlinear(_polarization_model(), ang, c, start, tol=tol, max_iter=max_iter)
    off, a1, amax = (float(v) for v in res.parameters)
    if a1 < 0:
        a1 = -a1
        amax += 45.0
    if not res.converged:
        warnings.append(f"polarization fit did not converge: {res.message}")
    e = res.standard_errors
    if off <= 0:
        warnings.append("fitted offset is not positive")
    return PolarizationFit(off, a1, _principal(amax), float(e[0]), float(e[1]), float(e[2]), res, warnings, flags)


# -- spectrum --------------------------------------------------------------------

@dataclass
class Spectrum:
    wavelength: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        self.wavelength = np.asarray(self.wavelength, dtype=float)
        self.intensity = np.asarray(self.intensity, dtype=float)
        if self.wavelength.shape != self.intensity.shape or self.wavelength.ndim != 1:
            raise ValueError("wavelength and intensity must be 1-D arrays of equal length")
        if len(self.wavelength) < 3 or np.any(np.diff(self.wavelength) <= 0):
            raise ValueError("wavelengths must be strictly increasing (>= 3 samples)")


@dataclass
class SpectrumReport:
    zpl_wavelength: Optional[float]
    zpl_present: bool
    peak_wavelength: float
    nv0_band_fraction: float
    charge_state_ok: bool
    warnings: list = field(default_factory=list)


def band_integral(wavelength, intensity, lo: float, hi: float) -> float:
    """Trapezoidal integral over ``[lo, hi]`` clipped to the sampled range."""
    wl = np.asarray(wavelength, dtype=float)
    y = np.asarray(intensity, dtype=float)
    lo = max(lo, wl[0])
    hi = min(hi, wl[-1])
    if hi <= lo:
        return 0.0
    inside = (wl > lo) & (wl < hi)
    xs = np.concatenate([[lo], wl[inside], [hi]])
    ys = np.concatenate([[np.interp(lo, wl, y)], y[inside], [np.interp(hi, wl, y)]])
    return float(trapezoid(ys, xs))


def _find_zpl(wl, y, window=ZPL_WINDOW, flank=10.0, snr=3.0):
    """Local maximum inside ``window`` standing ``snr`` x RMS above a flank baseline."""
    inwin = (wl >= window[0]) & (wl <= window[1])
    idx = np.nonzero(inwin)[0]
    if len(idx) < 3:
        return None
    flanks = ((wl >= window[0] - flank) & (wl < window[0])) | ((wl > window[1]) & (wl <= window[1] + flank))
    if np.count_nonzero(flanks) < 3:
        return None
    base = fit_linear(wl[flanks], y[flanks])
    rms = float(np.sqrt(np.mean((y[flanks] - base(wl[flanks])) ** 2)))
    # largest excess over the baseline, so a sloped background cannot pull the pick to a window edge
    i = idx[np.argmax(y[idx] - base(wl[idx]))]
    if i == 0 or i == len(y) - 1 or not (y[i] >= y[i - 1] and y[i] >= y[i + 1]):
        return None
    excess = float(y[i] - base(wl[i]))
    if not (excess > 0 and excess >= snr * rms):
        return None
    # parabolic vertex through the three samples around the maximum
    x0, x1, x2 = wl[i - 1: i + 2]
    y0, y1, y2 = y[i - 1: i + 2]
    den = (x0 - x1) * (x0 - x2) * (x1 - x2)
    ca = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den
    cb = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den
    if ca < 0:
        vertex = -cb / (2.0 * ca)
        if x0 <= vertex <= x2:
            return float(vertex)
    return float(wl[i])


def analyze_spectrum(s: Spectrum, nv0_threshold: float = DEFAULT_NV0_THRESHOLD) -> SpectrumReport:
    """ZPL detection and NV0-band fraction of an emission spectrum (wavelengths in nm)."""
    wl = s.wavelength
    y = s.intensity
    warnings = []
    if wl[0] > ZPL_WINDOW[0] or wl[-1] < ZPL_WINDOW[1]:
        warnings.append(f"spectrum does not cover the ZPL window {ZPL_WINDOW[0]:g}-{ZPL_WINDOW[1]:g} nm")
        zpl = None
    else:
        zpl = _find_zpl(wl, y)
    if wl[0] > TOTAL_BAND[0] or wl[-1] < TOTAL_BAND[1]:
        warnings.append("spectrum does not cover 550-850 nm; band fraction uses the available range")
    total = band_integral(wl, y, *TOTAL_BAND)
    if total > 0:
        frac = band_integral(wl, y, *NV0_BAND) / total
    else:
        frac = 0.0
        warnings.append("no emission in 550-850 nm")
    frac = min(max(frac, 0.0), 1.0)
    return SpectrumReport(
        zpl_wavelength=zpl,
        zpl_present=zpl is not None,
        peak_wavelength=float(wl[np.argmax(y)]),
        nv0_band_fraction=float(frac),
        charge_state_ok=bool(frac < nv0_threshold),
        warnings=warnings,
    )
