"""Seeded forward models for every analysis in the package.

Random numbers come from NumPy's ``PCG64`` bit generator seeded through
``SeedSequence``; the stream for a given seed is fixed across platforms, so
generated datasets (and the reports computed from them) are reproducible
bit for bit.  Independent sub-streams (one per emitter, plus routing) are
obtained with ``SeedSequence.spawn``.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import erfc, erfinv

from . import beam, odmr, photophys, pulse
from .photonstats import TimestampSeries

# 10-90 % span of a Gaussian-smoothed step in units of its sigma
_ERF_10_90 = 2.0 * math.sqrt(2.0) * float(erfinv(0.8))


def rng(seed: int) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def _multiplicative(values, noise_fraction, gen):
    values = np.asarray(values, dtype=float)
    if noise_fraction < 0:
        raise ValueError("noise fraction must be non-negative")
    if noise_fraction == 0:
        return values.copy()
    return values * (1.0 + noise_fraction * gen.standard_normal(values.shape))


def _counting(values, integration_time, gen):
    if not integration_time > 0:
        raise ValueError("integration time must be positive")
    return gen.poisson(np.clip(values, 0, None) * integration_time) / integration_time


def gen_knife_edge(
    geom: beam.BeamGeometry,
    z: float,
    x_grid: Sequence[float],
    p0: float,
    noise_fraction: float = 0.0,
    seed: int = 0,
    center: float = 0.0,
    direction: int = 1,
) -> beam.KnifeEdgeScan:
    x = np.asarray(x_grid, dtype=float)
    w = float(beam.width_at(geom, z))
    p = beam.knife_edge_power(x, p0, center, w, direction)
    p = np.clip(_multiplicative(p, noise_fraction, rng(seed)), 0.0, None)
    return beam.KnifeEdgeScan(z, x, p)


def gen_caustic(geom: beam.BeamGeometry, z_points, noise_fraction: float = 0.0, seed: int = 0):
    """Beam radii ``W(z)`` with multiplicative Gaussian noise; returns ``(z, w)``."""
    z = np.asarray(z_points, dtype=float)
    w = _multiplicative(beam.width_at(geom, z), noise_fraction, rng(seed))
    return z, np.abs(w)


def _emitter_times(excitation_rate, decay_rate, duration, gen) -> np.ndarray:
    """Emission instants of one two-level emitter cycling ground -> excited -> ground."""
    mean_cycle = 1.0 / excitation_rate + 1.0 / decay_rate
    out = []
    t = 0.0
    while True:
        n = int(duration / mean_cycle * 1.05) + 64
        waits = gen.exponential(1.0 / excitation_rate, n) + gen.exponential(1.0 / decay_rate, n)
        times = t + np.cumsum(waits)
        out.append(times)
        t = float(times[-1])
        if t >= duration:
            break
    times = np.concatenate(out)
    return times[times < duration]


def gen_photon_stream(
    n_emitters: int,
    excitation_rate: float,
    decay_rate: float,
    duration: float,
    seed: int = 0,
):
    """Two detector channels behind a 50:50 beam splitter (times in ns, rates in 1/ns).

    Each emitter independently alternates an exponential excitation wait and
    an exponential radiative decay; one photon is emitted per cycle.  The
    merged stream is routed photon by photon to channel 0 or 1 by a fair coin.
    """
    if n_emitters < 1:
        raise ValueError("need at least one emitter")
    if not (excitation_rate > 0 and decay_rate > 0 and duration > 0):
        raise ValueError("rates and duration must be positive")
    children = np.random.SeedSequence(int(seed)).spawn(n_emitters + 1)
    streams = [
        _emitter_times(excitation_rate, decay_rate, duration, np.random.Generator(np.random.PCG64(ss)))
        for ss in children[:n_emitters]
    ]
    merged = np.sort(np.concatenate(streams), kind="stable")
    route = np.random.Generator(np.random.PCG64(children[-1])).integers(0, 2, len(merged))
    span = (0.0, float(duration))
    return (
        TimestampSeries(merged[route == 0], span, channel_id=0),
        TimestampSeries(merged[route == 1], span, channel_id=1),
    )


def gen_poisson_stream(rate: float, duration: float, seed: int = 0, channel_id: int = 0) -> TimestampSeries:
    """Uncorrelated (coherent-light) arrivals at ``rate`` events per ns."""
    gen = rng(seed)
    n = gen.poisson(rate * duration)
    t = np.sort(gen.uniform(0.0, duration, n))
    return TimestampSeries(t, (0.0, float(duration)), channel_id)


def gen_saturation(
    a: float,
    p_sat: float,
    b: float,
    powers,
    noise_fraction: float = 0.0,
    seed: int = 0,
    noise: str = "gaussian",
    integration_time: float = 1.0,
) -> photophys.SaturationCurve:
    """Saturation-law counts; ``noise='poisson'`` draws counts over ``integration_time`` seconds."""
    p = np.asarray(powers, dtype=float)
    mean = photophys.saturation_curve(p, a, p_sat, b)
    gen = rng(seed)
    if noise == "gaussian":
        counts = _multiplicative(mean, noise_fraction, gen)
    elif noise == "poisson":
        counts = _counting(mean, integration_time, gen)
    else:
        raise ValueError(f"unknown noise model {noise!r}")
    return photophys.SaturationCurve(p, counts)


def gen_background(slope: float, intercept: float, powers, noise_fraction=0.0, seed: int = 0):
    """Linear background counts ``slope*P + intercept``; returns ``(powers, counts)``."""
    p = np.asarray(powers, dtype=float)
    return p, _multiplicative(slope * p + intercept, noise_fraction, rng(seed))


def gen_polarization(
    offset: float,
    amplitude: float,
    max_angle: float,
    angles,
    noise_fraction: float = 0.0,
    seed: int = 0,
) -> photophys.PolarizationSweep:
    if not (offset > amplitude >= 0):
        raise ValueError("require offset > amplitude >= 0")
    ang = np.asarray(angles, dtype=float)
    counts = photophys.polarization_response(ang, offset, amplitude, max_angle)
    return photophys.PolarizationSweep(ang, _multiplicative(counts, noise_fraction, rng(seed)))


def pulse_shape(t, t_rise, t_fall, rise_10_90, fall_10_90):
    """Unit pulse: Gaussian-smoothed step up at ``t_rise`` and down at ``t_fall`` (50 % points)."""
    t = np.asarray(t, dtype=float)
    sr = rise_10_90 / _ERF_10_90
    sf = fall_10_90 / _ERF_10_90
    up = 0.5 * erfc(-(t - t_rise) / (sr * math.sqrt(2.0)))
    down = 0.5 * erfc((t - t_fall) / (sf * math.sqrt(2.0)))
    return up * down


def gen_pulse(
    rise_10_90: float,
    fall_10_90: float,
    width: float,
    on_level: float = 1.0,
    extinction_ratio: float = 1e3,
    ripple_fraction: float = 0.0,
    sample_period: float = 0.8,
    seed: int = 0,
    noise_level: float = 0.0,
    ripple_period: float = 40.0,
    lead: float | None = None,
    offset: float = 0.0,
) -> pulse.PulseTrace:
    """Synthetic AOM pulse trace (times in ns).

    Edges are error functions scaled to the requested 10-90 % times;
    ``off_level = on_level / extinction_ratio``.  A damped sinusoid with
    initial relative amplitude ``ripple_fraction`` rides on the first quarter
    of the plateau.  ``noise_level`` adds zero-mean Gaussian noise of that
    absolute standard deviation.
    """
    if not width > rise_10_90 + fall_10_90:
        raise ValueError("pulse width must exceed rise + fall time")
    if not extinction_ratio > 1:
        raise ValueError("extinction ratio must exceed 1")
    if lead is None:
        lead = max(0.25 * width, 20.0 * max(rise_10_90, fall_10_90))
    total = 2.0 * lead + width
    n = int(round(total / sample_period)) + 1
    t = np.arange(n) * sample_period
    t_rise = lead + offset
    t_fall = t_rise + width
    off = on_level / extinction_ratio
    y = off + (on_level - off) * pulse_shape(t, t_rise, t_fall, rise_10_90, fall_10_90)
    if ripple_fraction:
        t_start = t_rise + rise_10_90
        t_stop = t_rise + 0.25 * width
        tau = 0.25 * (t_stop - t_start)
        dt = t - t_start
        win = (dt >= 0) & (t <= t_stop)
        ripple = np.zeros_like(t)
        ripple[win] = np.sin(2.0 * math.pi * dt[win] / ripple_period) * np.exp(-dt[win] / tau)
        y = y + on_level * ripple_fraction * ripple
    if noise_level:
        y = y + noise_level * rng(seed).standard_normal(n)
    return pulse.PulseTrace(sample_period, y, nominal_pulse_width=width)


def gen_odmr(
    baseline: float,
    contrast: float,
    f0: float,
    fwhm: float,
    frequencies,
    noise_fraction: float = 0.0,
    seed: int = 0,
    noise: str = "gaussian",
    integration_time: float = 1.0,
) -> odmr.OdmrSweep:
    if not (0 <= contrast < 1) or not fwhm > 0:
        raise ValueError("require 0 <= contrast < 1 and fwhm > 0")
    f = np.asarray(frequencies, dtype=float)
    mean = odmr.lorentzian_dip(f, baseline, contrast, f0, fwhm)
    gen = rng(seed)
    if noise == "gaussian":
        y = _multiplicative(mean, noise_fraction, gen)
    elif noise == "poisson":
        y = _counting(mean, integration_time, gen)
    else:
        raise ValueError(f"unknown noise model {noise!r}")
    return odmr.OdmrSweep(f, y)


# -- spectra --------------------------------------------------------------------

ZPL_NM = 637.0
ZPL_SIGMA_NM = 1.0
NV0_ZPL_NM = 575.0


def nvm_sideband(wl):
    """NV- phonon sideband: zero below 600 nm, peak 1 at 700 nm, long red tail."""
    x = np.clip((np.asarray(wl, dtype=float) - 600.0) / 100.0, 0.0, None)
    return x**3 * np.exp(3.0 * (1.0 - x))


def nv0_band(wl):
    """NV0 sideband: raised-sine bump on 575-650 nm, peak 1."""
    wl = np.asarray(wl, dtype=float)
    inside = (wl > NV0_ZPL_NM) & (wl < 650.0)
    return np.where(inside, np.sin(math.pi * (wl - NV0_ZPL_NM) / 75.0) ** 2, 0.0)


def _gauss(wl, center, sigma):
    return np.exp(-0.5 * ((np.asarray(wl, dtype=float) - center) / sigma) ** 2)


def spectrum_model(wl, zpl_weight: float, nv0_weight: float):
    """Noise-free intensity: NV- (ZPL + sideband) plus ``nv0_weight`` x NV0 (ZPL + band)."""
    nvm = zpl_weight * _gauss(wl, ZPL_NM, ZPL_SIGMA_NM) + nvm_sideband(wl)
    nv0 = 0.5 * _gauss(wl, NV0_ZPL_NM, ZPL_SIGMA_NM) + nv0_band(wl)
    return nvm + nv0_weight * nv0


def gen_spectrum(
    zpl_weight: float,
    nv0_weight: float,
    wavelength_grid,
    seed: int = 0,
    noise_fraction: float = 0.0,
) -> photophys.Spectrum:
    """Emission spectrum on ``wavelength_grid`` (nm); weights are peak heights relative to the NV- sideband."""
    if zpl_weight < 0 or nv0_weight < 0:
        raise ValueError("weights must be non-negative")
    wl = np.asarray(wavelength_grid, dtype=float)
    y = spectrum_model(wl, zpl_weight, nv0_weight)
    if noise_fraction:
        y = y + noise_fraction * rng(seed).standard_normal(len(wl))
    return photophys.Spectrum(wl, y)
