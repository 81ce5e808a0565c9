"""Gaussian beam propagation, knife-edge profiles and caustic (M^2) fits.

All quantities are SI: metres, watts, radians.  Conversions from the
micrometre / microwatt columns found in lab files happen in the CLI.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import erfc

from .fitcore import FitError, FitResult, ModelFunction, fit_linear, fit_nonlinear, propagate

log = logging.getLogger(__name__)

# 10-90 % span of (1/2) erfc(sqrt(2) u / W) is 2 * 0.6408 W
_ERFC_10_90 = 1.2815515655446004


@dataclass(frozen=True)
class BeamGeometry:
    w0: float
    z_r: float
    z0: float = 0.0
    wavelength: float = 532e-9

    def __post_init__(self):
        if not (self.w0 > 0 and self.z_r > 0 and self.wavelength > 0):
            raise ValueError("w0, z_r and wavelength must be positive")
        if not math.isfinite(self.z0):
            raise ValueError("z0 must be finite")

    @property
    def divergence(self) -> float:
        return self.w0 / self.z_r

    @classmethod
    def ideal(cls, w0: float, wavelength: float, z0: float = 0.0) -> "BeamGeometry":
        """Diffraction-limited beam: ``z_r = pi w0^2 / wavelength``."""
        return cls(w0, math.pi * w0 * w0 / wavelength, z0, wavelength)


@dataclass
class KnifeEdgeScan:
    z: float
    x: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.power = np.asarray(self.power, dtype=float)
        if self.x.shape != self.power.shape or self.x.ndim != 1:
            raise ValueError("x and power must be 1-D arrays of equal length")
        if len(self.x) < 6:
            raise ValueError("knife-edge scan needs at least 6 samples")
        d = np.diff(self.x)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("blade positions must be strictly monotone")
        if np.any(self.power < 0):
            raise ValueError("transmitted power must be non-negative")


@dataclass
class KnifeEdgeFit:
    width: float
    total_power: float
    center: float
    width_error: float
    total_power_error: float
    center_error: float
    direction: int
    z: float = 0.0
    fit: Optional[FitResult] = field(default=None, repr=False)
    warnings: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.fit is None or self.fit.converged

    def __call__(self, x):
        """Fitted transmitted power at blade position(s) ``x``."""
        return knife_edge_power(x, self.total_power, self.center, self.width, self.direction)


@dataclass
class BeamQualityReport:
    geometry: BeamGeometry
    divergence: float
    m_squared: float
    w0_error: float
    z_r_error: float
    z0_error: float
    divergence_error: float
    m_squared_error: float
    spot_size: Optional[float] = None
    spot_size_error: Optional[float] = None
    confocal_volume: Optional[float] = None
    confocal_volume_error: Optional[float] = None
    fit: Optional[FitResult] = field(default=None, repr=False)
    warnings: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.fit is None or self.fit.converged


def width_at(geom: BeamGeometry, z):
    """Beam radius ``W(z)`` (1/e^2 intensity radius)."""
    u = (np.asarray(z, dtype=float) - geom.z0) / geom.z_r
    return geom.w0 * np.sqrt(1.0 + u * u)


def intensity(geom: BeamGeometry, i0: float, rho, z):
    w = width_at(geom, z)
    rho = np.asarray(rho, dtype=float)
    return i0 * (geom.w0 / w) ** 2 * np.exp(-2.0 * rho * rho / (w * w))


def _require_positive(**kw):
    for name, value in kw.items():
        if not (value > 0 and math.isfinite(value)):
            raise ValueError(f"{name} must be positive and finite, got {value!r}")


def m_squared(w0: float, z_r: float, wavelength: float) -> float:
    _require_positive(w0=w0, z_r=z_r, wavelength=wavelength)
    return math.pi * w0 * w0 / (wavelength * z_r)


def spot_size(m2: float, wavelength: float, focal_length: float, beam_diameter: float) -> float:
    """Focused spot diameter ``2 W_SS = 4 M^2 lambda f / (pi D)``."""
    _require_positive(m2=m2, wavelength=wavelength, focal_length=focal_length, beam_diameter=beam_diameter)
    return 4.0 * m2 * wavelength * focal_length / (math.pi * beam_diameter)


def confocal_volume(m2: float, wavelength: float, focal_length: float, beam_diameter: float) -> float:
    _require_positive(m2=m2, wavelength=wavelength, focal_length=focal_length, beam_diameter=beam_diameter)
    return math.sqrt(2.0**5 / math.pi**3) * m2**3 * wavelength**3 * focal_length**4 / beam_diameter**4


# -- knife edge ---------------------------------------------------------------

def knife_edge_power(x, p0, xc, w, direction=1):
    """``(P0/2) erfc(s sqrt(2) (x - xc) / W)``; ``s=+1`` when the blade covers toward +x."""
    x = np.asarray(x, dtype=float)
    return 0.5 * p0 * erfc(direction * math.sqrt(2.0) * (x - xc) / w)


def _knife_edge_model(direction: int) -> ModelFunction:
    s2 = math.sqrt(2.0)

    def evaluate(p, x):
        return knife_edge_power(x, p[0], p[1], p[2], direction)

    def jacobian(p, x):
        p0, xc, w = p
        u = direction * s2 * (x - xc) / w
        g = np.exp(-u * u) / math.sqrt(math.pi)
        d_p0 = 0.5 * erfc(u)
        # d/du erfc(u) = -2 exp(-u^2)/sqrt(pi)
        d_xc = p0 * g * direction * s2 / w
        d_w = p0 * g * u / w
        return np.column_stack([d_p0, d_xc, d_w])

    return ModelFunction(evaluate, 3, jacobian, ("total_power", "center", "width"))


def _crossing(x, y, level):
    """Abscissa where ``y`` first crosses ``level``, by linear interpolation."""
    above = y >= level
    idx = np.nonzero(above[1:] != above[:-1])[0]
    if len(idx) == 0:
        return None
    i = idx[0]
    y0, y1 = y[i], y[i + 1]
    if y1 == y0:
        return float(x[i])
    return float(x[i] + (level - y0) * (x[i + 1] - x[i]) / (y1 - y0))


def knife_edge_guess(scan: KnifeEdgeScan):
    """Start values (P0, xc, W, direction) read straight off the data."""
    order = np.argsort(scan.x)
    x = scan.x[order]
    p = scan.power[order]
    slope = fit_linear(x, p).slope
    direction = 1 if slope <= 0 else -1
    p0 = float(p.max())
    # work on a rising curve so a single forward crossing search suffices
    xs, ps = (x[::-1], p[::-1]) if direction == 1 else (x, p)
    xc = _crossing(xs, ps, 0.5 * p0)
    if xc is None:
        xc = float(x[np.argmin(np.abs(p - 0.5 * p0))])
    x10 = _crossing(xs, ps, 0.1 * p0)
    x90 = _crossing(xs, ps, 0.9 * p0)
    if x10 is not None and x90 is not None and x10 != x90:
        w = abs(x10 - x90) / _ERFC_10_90
    else:
        w = 0.25 * float(np.ptp(x))
    return p0, xc, w, direction


def fit_knife_edge(scan: KnifeEdgeScan, *, tol: float = 1e-10, max_iter: int = 200) -> KnifeEdgeFit:
    """Fit the complementary-error-function profile of a knife-edge scan.

    The blade direction is taken from the sign of the overall slope, so
    scans recorded in either direction give the same width.
    """
    warnings = []
    pmax = float(scan.power.max())
    pmin = float(scan.power.min())
    if pmax <= 0:
        raise FitError("knife-edge scan carries no power")
    if pmin > 0 and pmax / pmin < 5.0:
        warnings.append(f"insufficient dynamic range: max/min power = {pmax / pmin:.2f} < 5")
    p0, xc, w, direction = knife_edge_guess(scan)
    model = _knife_edge_model(direction)
    res = fit_nonlinear(model, scan.x, scan.power, [p0, xc, w], tol=tol, max_iter=max_iter)
    if not res.converged:
        warnings.append(f"knife-edge fit did not converge: {res.message}")
    fp0, fxc, fw = res.parameters
    e_p0, e_xc, e_w = res.standard_errors
    return KnifeEdgeFit(
        width=abs(float(fw)),
        total_power=float(fp0),
        center=float(fxc),
        width_error=float(e_w),
        total_power_error=float(e_p0),
        center_error=float(e_xc),
        direction=direction if fw > 0 else -direction,
        z=scan.z,
        fit=res,
        warnings=warnings,
    )


def derivative_profile(fit: KnifeEdgeFit, x):
    """Gaussian line profile ``|dP/dx|`` recovered from a knife-edge fit."""
    x = np.asarray(x, dtype=float)
    w = fit.width
    return fit.total_power * math.sqrt(2.0 / math.pi) / w * np.exp(-2.0 * (x - fit.center) ** 2 / (w * w))


# -- caustic -----------------------------------------------------------------

def _caustic_model() -> ModelFunction:
    def evaluate(p, z):
        w0, zr, z0 = p
        u = (z - z0) / zr
        return w0 * np.sqrt(1.0 + u * u)

    def jacobian(p, z):
        w0, zr, z0 = p
        u = (z - z0) / zr
        root = np.sqrt(1.0 + u * u)
        d_w0 = root
        d_zr = -w0 * u * u / (zr * root)
        d_z0 = -w0 * u / (zr * root)
        return np.column_stack([d_w0, d_zr, d_z0])

    return ModelFunction(evaluate, 3, jacobian, ("w0", "z_r", "z0"))


caustic_model = _caustic_model()


def caustic_guess(z, w):
    """Start values from a parabola fitted to ``W^2(z)``; falls back to min-W heuristics."""
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    i = int(np.argmin(w))
    fallback = (float(w[i]), max(float(np.ptp(z)) / 4.0, 1e-30), float(z[i]))
    if len(z) < 3:
        return fallback
    zm = z.mean()
    zs = float(np.ptp(z)) or 1.0
    c2, c1, c0 = np.polyfit((z - zm) / zs, w * w, 2)
    if c2 <= 0:
        return fallback
    t0 = -c1 / (2.0 * c2)
    w0sq = c0 - c1 * c1 / (4.0 * c2)
    if w0sq <= 0:
        return fallback
    w0 = math.sqrt(w0sq)
    # W^2 = w0^2 + (w0/zr)^2 (z - z0)^2  ->  c2 / zs^2 = (w0/zr)^2
    zr = w0 * zs / math.sqrt(c2)
    return w0, zr, zm + t0 * zs


def fit_caustic(
    z,
    w,
    wavelength: float,
    w_err=None,
    *,
    focal_length: Optional[float] = None,
    beam_diameter: Optional[float] = None,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> BeamQualityReport:
    """Fit ``W(z) = W0 sqrt(1 + ((z - z0)/zR)^2)`` and derive M^2 and focal quantities.

    ``w_err`` (per-point 1-sigma widths) switches to inverse-variance
    weighting.  Spot size and confocal volume are filled in only when both
    ``focal_length`` and ``beam_diameter`` are supplied.
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    if z.shape != w.shape or z.ndim != 1:
        raise FitError("z and w must be 1-D arrays of equal length")
    if len(z) < 4:
        raise FitError(f"caustic fit needs at least 4 points, got {len(z)}")
    if np.any(w <= 0):
        raise FitError("beam widths must be positive")
    _require_positive(wavelength=wavelength)
    weights = None
    if w_err is not None:
        w_err = np.asarray(w_err, dtype=float)
        if w_err.shape != w.shape or np.any(~(w_err > 0)):
            raise FitError("width uncertainties must be positive and match the widths")
        weights = 1.0 / w_err**2

    warnings = []
    flags = {}
    res = fit_nonlinear(caustic_model, z, w, caustic_guess(z, w), weights, tol=tol, max_iter=max_iter)
    w0, zr, z0 = (float(v) for v in res.parameters)
    w0, zr = abs(w0), abs(zr)
    cov = res.covariance
    if not res.converged:
        warnings.append(f"caustic fit did not converge: {res.message}")

    wmin = float(w.min())
    left = z < z0
    right = z > z0
    one_sided = not (np.any(left) and np.any(right))
    flags["one_sided"] = bool(one_sided)
    if one_sided:
        warnings.append("all points lie on one side of the fitted waist; low confidence")
    elif not (np.any(w[left] > 1.2 * wmin) and np.any(w[right] > 1.2 * wmin)):
        warnings.append("caustic does not reach 1.2 x minimum width on both sides of the waist")

    m2 = m_squared(w0, zr, wavelength)
    m2_err = propagate([2.0 * m2 / w0, -m2 / zr], cov[:2, :2])
    theta = w0 / zr
    theta_err = propagate([1.0 / zr, -theta / zr], cov[:2, :2])
    flags["m_squared_below_one"] = bool(m2 < 1.0)
    if m2 < 1.0:
        warnings.append(f"M^2 estimate {m2:.3f} is below the diffraction limit")

    report = BeamQualityReport(
        geometry=BeamGeometry(w0, zr, z0, wavelength),
        divergence=theta,
        m_squared=m2,
        w0_error=float(res.standard_errors[0]),
        z_r_error=float(res.standard_errors[1]),
        z0_error=float(res.standard_errors[2]),
        divergence_error=theta_err,
        m_squared_error=m2_err,
        fit=res,
        warnings=warnings,
        flags=flags,
    )
    if focal_length is not None and beam_diameter is not None:
        ss = spot_size(max(m2, 1e-300), wavelength, focal_length, beam_diameter)
        vol = confocal_volume(max(m2, 1e-300), wavelength, focal_length, beam_diameter)
        report.spot_size = ss
        report.spot_size_error = ss / m2 * m2_err
        report.confocal_volume = vol
        report.confocal_volume_error = 3.0 * vol / m2 * m2_err
    return report


def fit_caustic_points(points: Sequence, wavelength: float, **kw) -> BeamQualityReport:
    """Convenience wrapper taking ``(z, W)`` or ``(z, W, W_error)`` tuples."""
    pts = [tuple(p) for p in points]
    z = [p[0] for p in pts]
    w = [p[1] for p in pts]
    errs = [p[2] if len(p) > 2 else None for p in pts]
    w_err = None if any(e is None for e in errs) else errs
    return fit_caustic(z, w, wavelength, w_err, **kw)
