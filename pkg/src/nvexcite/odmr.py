"""ODMR contrast: direct edge-average estimator and single-Lorentzian fit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fitcore import FitResult, ModelFunction, fit_nonlinear

EDGE_POINTS = 5


@dataclass
class OdmrSweep:
    """Frequencies in Hz.  Decreasing sweeps are re-ordered to increasing."""

    frequency: np.ndarray
    fluorescence: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequency, dtype=float)
        y = np.asarray(self.fluorescence, dtype=float)
        if f.shape != y.shape or f.ndim != 1:
            raise ValueError("frequency and fluorescence must be 1-D arrays of equal length")
        if len(f) < 2 * EDGE_POINTS + 1:
            raise ValueError(f"ODMR sweep needs at least {2 * EDGE_POINTS + 1} points")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite sweep values")
        d = np.diff(f)
        if np.all(d < 0):
            f, y = f[::-1].copy(), y[::-1].copy()
        elif not np.all(d > 0):
            raise ValueError("frequencies must be strictly monotone")
        self.frequency = f
        self.fluorescence = y


@dataclass
class OdmrResult:
    contrast_direct: float
    contrast_lorentzian: float
    contrast_error: float
    center_frequency: float
    center_frequency_error: float
    linewidth: float
    linewidth_error: float
    baseline: float
    baseline_error: float
    fit: Optional[FitResult] = field(default=None, repr=False)
    warnings: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.fit is None or self.fit.converged

    def __call__(self, frequency):
        return lorentzian_dip(frequency, self.baseline, self.contrast_lorentzian, self.center_frequency, self.linewidth)


def lorentzian_dip(f, baseline, contrast, f0, fwhm):
    """``B (1 - C (G/2)^2 / ((f - f0)^2 + (G/2)^2))``."""
    f = np.asarray(f, dtype=float)
    hw2 = 0.25 * fwhm * fwhm
    return baseline * (1.0 - contrast * hw2 / ((f - f0) ** 2 + hw2))


def _lorentzian_model() -> ModelFunction:
    def evaluate(p, f):
        return lorentzian_dip(f, *p)

    def jacobian(p, f):
        b, c, f0, g = p
        hw2 = 0.25 * g * g
        d = f - f0
        den = d * d + hw2
        lor = hw2 / den
        d_b = 1.0 - c * lor
        d_c = -b * lor
        d_f0 = -b * c * hw2 * 2.0 * d / (den * den)
        # d lor / d g = (g/2) d^2 / den^2
        d_g = -b * c * 0.5 * g * d * d / (den * den)
        return np.column_stack([d_b, d_c, d_f0, d_g])

    return ModelFunction(evaluate, 4, jacobian, ("baseline", "contrast", "center_frequency", "linewidth"))


def edge_average(sweep: OdmrSweep) -> float:
    y = sweep.fluorescence
    return float(np.mean(np.concatenate([y[:EDGE_POINTS], y[-EDGE_POINTS:]])))


def contrast_direct(sweep: OdmrSweep) -> float:
    """``(I_avg - I_min) / I_avg`` with ``I_avg`` the mean of the first and last five points."""
    i_avg = edge_average(sweep)
    if i_avg <= 0:
        raise ValueError("edge average fluorescence is not positive")
    return float((i_avg - sweep.fluorescence.min()) / i_avg)


def dip_fwhm(frequency, fluorescence, baseline: Optional[float] = None) -> Optional[float]:
    """Full width at half depth of the dip around the global minimum (linear interpolation)."""
    f = np.asarray(frequency, dtype=float)
    y = np.asarray(fluorescence, dtype=float)
    i = int(np.argmin(y))
    if baseline is None:
        baseline = float(np.mean(np.concatenate([y[:EDGE_POINTS], y[-EDGE_POINTS:]])))
    level = 0.5 * (baseline + y[i])
    j = i
    while j > 0 and y[j] < level:
        j -= 1
    k = i
    while k < len(y) - 1 and y[k] < level:
        k += 1
    if y[j] < level or y[k] < level:
        return None
    left = f[j] + (level - y[j]) * (f[j + 1] - f[j]) / (y[j + 1] - y[j])
    right = f[k - 1] + (level - y[k - 1]) * (f[k] - f[k - 1]) / (y[k] - y[k - 1])
    return float(right - left)


def fit_odmr(sweep: OdmrSweep, *, tol: float = 1e-10, max_iter: int = 200) -> OdmrResult:
    """Single-Lorentzian dip fit plus the direct contrast estimate."""
    f = sweep.frequency
    y = sweep.fluorescence
    warnings = []
    flags = {}
    base = edge_average(sweep)
    cd = contrast_direct(sweep)
    i_min = int(np.argmin(y))
    flags["low_signal"] = bool(y[i_min] >= 0.95 * base)
    if flags["low_signal"]:
        warnings.append("dip shallower than 5 % of the edge level; fit may be unreliable")
    gamma = dip_fwhm(f, y, base)
    if gamma is None or gamma <= 0:
        gamma = 4.0 * float(np.median(np.diff(f)))
    start = [base, max(cd, 1e-3), float(f[i_min]), gamma]
    res = fit_nonlinear(_lorentzian_model(), f, y, start, tol=tol, max_iter=max_iter)
    b, c, f0, g = (float(v) for v in res.parameters)
    eb, ec, ef0, eg = (float(v) for v in res.standard_errors)
    g = abs(g)
    if not res.converged:
        warnings.append(f"Lorentzian fit did not converge: {res.message}")
    step = float(np.median(np.diff(f)))
    flags["center_at_boundary"] = bool(f0 <= f[0] + step or f0 >= f[-1] - step)
    if flags["center_at_boundary"]:
        warnings.append("fitted resonance lies at the edge of the sweep")
    if not (0.0 <= c <= 1.0):
        warnings.append(f"fitted contrast {c:.4f} outside [0, 1]")
    return OdmrResult(cd, c, ec, f0, ef0, g, eg, b, eb, res, warnings, flags)
