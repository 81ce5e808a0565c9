"""``nvexcite`` command line: CSV in, key-sorted report out.

Exit codes: 0 success, 1 bad input (usage, file or format errors),
2 a fit that did not converge (the report is still written).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from contextlib import contextmanager
from typing import Optional, Sequence

import numpy as np

from . import __version__, beam, csvio, odmr, photonstats, photophys, pulse, synth

log = logging.getLogger("nvexcite")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGED = 2

UM = 1e-6
NM = 1e-9
MM = 1e-3
UW = 1e-6
MHZ = 1e6
NS = 1e-9


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _param(value, error=None) -> dict:
    return {"value": value, "error": error}


def _report(args, subcommand: str, inputs: Sequence[str]) -> dict:
    return {
        "tool_version": __version__,
        "subcommand": subcommand,
        "input_digest": csvio.file_digest(inputs),
        "parameters": {},
        "warnings": [],
        "flags": {},
    }


@contextmanager
def _output(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _write_curve(path, header, columns):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            csvio.write_csv(fh, header, columns)


def _load(path, schema, report) -> csvio.Table:
    table = csvio.parse_csv(path, schema)
    report["warnings"].extend(table.warnings)
    return table


# -- analyzers ------------------------------------------------------------------

def _knife_edge(args, report) -> bool:
    scans = []
    if args.z_um and len(args.z_um) != len(args.files):
        raise ValueError("--z-um must be given once per input file")
    for i, path in enumerate(args.files):
        t = _load(path, csvio.KNIFE_EDGE, report)
        x, p = t["x_um"] * UM, t["power_uW"] * UW
        if "z_um" in t:
            if args.z_um:
                raise ValueError(f"{path}: file has a z_um column; do not also pass --z-um")
            zs = t["z_um"]
            for z in dict.fromkeys(zs.tolist()):
                sel = zs == z
                scans.append(beam.KnifeEdgeScan(z * UM, x[sel], p[sel]))
        else:
            z = args.z_um[i] if args.z_um else 0.0
            scans.append(beam.KnifeEdgeScan(z * UM, x, p))
    fits = [beam.fit_knife_edge(s) for s in scans]
    ok = all(f.converged for f in fits)
    rows = []
    for f in fits:
        rows.append({
            "z_um": f.z / UM,
            "width_um": _param(f.width / UM, f.width_error / UM),
            "total_power_uW": _param(f.total_power / UW, f.total_power_error / UW),
            "center_um": _param(f.center / UM, f.center_error / UM),
            "direction": f.direction,
            "converged": f.converged,
        })
        report["warnings"].extend(f"z={f.z / UM:g} um: {w}" for w in f.warnings)
    if len(fits) == 1:
        report["parameters"] = {k: v for k, v in rows[0].items() if isinstance(v, dict)}
    report["scans"] = rows
    report["flags"]["all_converged"] = ok
    zs = sorted({f.z for f in fits})
    if args.lambda_nm is not None and len(zs) >= 4:
        res = beam.fit_caustic([f.z for f in fits], [f.width for f in fits], args.lambda_nm * NM,
                               [f.width_error for f in fits] if all(f.width_error > 0 for f in fits) else None)
        report["caustic"] = _caustic_params(res)
        report["warnings"].extend(res.warnings)
        report["flags"].update(res.flags)
        ok = ok and res.converged
    if args.curve_out:
        z_col, x_col, yd, yf = [], [], [], []
        for s, f in zip(scans, fits):
            z_col.extend([s.z / UM] * len(s.x))
            x_col.extend(s.x / UM)
            yd.extend(s.power / UW)
            yf.extend(f(s.x) / UW)
        _write_curve(args.curve_out, ["z_um", "x_um", "y_data", "y_fit"], [z_col, x_col, yd, yf])
    return ok


def _caustic_params(res: beam.BeamQualityReport) -> dict:
    g = res.geometry
    out = {
        "w0_um": _param(g.w0 / UM, res.w0_error / UM),
        "z_r_um": _param(g.z_r / UM, res.z_r_error / UM),
        "z0_um": _param(g.z0 / UM, res.z0_error / UM),
        "divergence_mrad": _param(res.divergence * 1e3, res.divergence_error * 1e3),
        "m_squared": _param(res.m_squared, res.m_squared_error),
    }
    if res.spot_size is not None:
        out["spot_size_nm"] = _param(res.spot_size / NM, res.spot_size_error / NM)
        out["confocal_volume_um3"] = _param(res.confocal_volume / UM**3, res.confocal_volume_error / UM**3)
    return out


def _caustic(args, report) -> bool:
    t = _load(args.file, csvio.CAUSTIC, report)
    z, w = t["z_um"] * UM, t["w_um"] * UM
    w_err = t["w_err_um"] * UM if "w_err_um" in t else None
    if (args.focal_mm is None) != (args.beam_diameter_mm is None):
        raise ValueError("--focal-mm and --beam-diameter-mm must be given together")
    res = beam.fit_caustic(
        z, w, args.lambda_nm * NM, w_err,
        focal_length=None if args.focal_mm is None else args.focal_mm * MM,
        beam_diameter=None if args.beam_diameter_mm is None else args.beam_diameter_mm * MM,
    )
    report["parameters"] = _caustic_params(res)
    report["warnings"].extend(res.warnings)
    report["flags"].update(res.flags)
    order = np.argsort(z, kind="stable")
    _write_curve(args.curve_out, ["z_um", "y_data", "y_fit"],
                 [z[order] / UM, w[order] / UM, beam.width_at(res.geometry, z[order]) / UM])
    return res.converged


def _g2(args, report) -> bool:
    a = _load(args.files[0], csvio.TIMESTAMPS, report)["t_ns"]
    b = _load(args.files[1], csvio.TIMESTAMPS, report)["t_ns"]
    window = args.window_ns
    ratio = 2.0 * window / args.bin_ns
    if abs(ratio - round(ratio)) <= 1e-9 * max(1.0, ratio) and round(ratio) % 2 == 0:
        window = photonstats.odd_window(window, args.bin_ns)
        report["warnings"].append(
            f"2*window/bin = {round(ratio)} bins is even; window widened to {window!r} ns so that tau=0 is a bin centre"
        )
    hist = photonstats.correlate(
        photonstats.TimestampSeries(a, channel_id=0),
        photonstats.TimestampSeries(b, channel_id=1),
        window, args.bin_ns, workers=args.workers,
    )
    g0 = photonstats.g2_zero(hist, args.smoothing_bins)
    c, h = hist.center_index, args.smoothing_bins // 2
    central = float(hist.raw_counts[c - h: c + h + 1].sum())
    g0_err = math.sqrt(central) / (hist.normalization_factor * args.smoothing_bins)
    est = photonstats.emitter_count(g0)
    report["parameters"] = {
        "g2_zero": _param(g0, g0_err),
        "n_emitters": _param(est.n_emitters),
    }
    report["flags"]["is_single"] = est.is_single
    wing = None
    try:
        wing = hist.wing_mean(0.5 * window)
    except ValueError:
        pass
    report["histogram"] = {
        "bins": len(hist.bin_centers),
        "bin_width_ns": hist.bin_width,
        "window_ns": window,
        "normalization": hist.normalization_factor,
        "total_pairs": int(hist.raw_counts.sum()),
        "wing_mean_g2": wing,
        "events": [len(a), len(b)],
    }
    _write_curve(args.curve_out, ["tau_ns", "y_data", "counts"], [hist.bin_centers, hist.g2, hist.raw_counts])
    return True


def _saturation(args, report) -> bool:
    t = _load(args.file, csvio.SATURATION, report)
    bp = bc = None
    if args.background:
        bt = _load(args.background, csvio.SATURATION, report)
        bp, bc = bt["power_uW"] * UW, bt["counts_per_s"]
    curve = photophys.SaturationCurve(t["power_uW"] * UW, t["counts_per_s"], bp, bc)
    res = photophys.fit_saturation(curve, weighting=args.weighting)
    report["parameters"] = {
        "a_counts_per_s": _param(res.a, res.a_error),
        "p_sat_uW": _param(res.p_sat / UW, res.p_sat_error / UW),
        "b_counts_per_s_per_uW": _param(res.b * UW, res.b_error * UW),
    }
    if res.background is not None:
        report["background"] = {
            "slope_counts_per_s_per_uW": _param(res.background.slope * UW, res.background.slope_error * UW),
            "intercept_counts_per_s": _param(res.background.intercept, res.background.intercept_error),
        }
    report["warnings"].extend(res.warnings)
    report["flags"].update(res.flags)
    y = curve.counts if res.background is None else curve.counts - res.background(curve.power)
    _write_curve(args.curve_out, ["power_uW", "y_data", "y_fit"], [curve.power / UW, y, res(curve.power)])
    return res.converged


def _polarization(args, report) -> bool:
    t = _load(args.file, csvio.POLARIZATION, report)
    sweep = photophys.PolarizationSweep(t["angle_deg"], t["counts_per_s"])
    res = photophys.fit_polarization(sweep)
    report["parameters"] = {
        "offset_counts_per_s": _param(res.offset, res.offset_error),
        "amplitude_counts_per_s": _param(res.amplitude, res.amplitude_error),
        "max_angle_deg": _param(res.max_angle, res.max_angle_error),
        "visibility": _param(res.visibility),
    }
    report["warnings"].extend(res.warnings)
    report["flags"].update(res.flags)
    _write_curve(args.curve_out, ["angle_deg", "y_data", "y_fit"], [sweep.angle, sweep.counts, res(sweep.angle)])
    return res.converged


def _spectrum(args, report) -> bool:
    t = _load(args.file, csvio.SPECTRUM, report)
    s = photophys.Spectrum(t["wavelength_nm"], t["intensity"])
    res = photophys.analyze_spectrum(s, nv0_threshold=args.nv0_threshold)
    report["parameters"] = {
        "zpl_wavelength_nm": _param(res.zpl_wavelength),
        "peak_wavelength_nm": _param(res.peak_wavelength),
        "nv0_band_fraction": _param(res.nv0_band_fraction),
    }
    report["flags"].update(zpl_present=res.zpl_present, charge_state_ok=res.charge_state_ok)
    report["warnings"].extend(res.warnings)
    _write_curve(args.curve_out, ["wavelength_nm", "y_data"], [s.wavelength, s.intensity])
    return True


def _pulse(args, report) -> bool:
    t = _load(args.file, csvio.PULSE, report)
    trace = pulse.PulseTrace.from_times(
        t["t_ns"] * NS, t["intensity"],
        nominal_pulse_width=None if args.nominal_width_ns is None else args.nominal_width_ns * NS,
    )
    m = pulse.analyze_pulse(trace, input_power=args.input_power)
    report["parameters"] = {
        "rise_time_ns": _param(m.rise_time / NS),
        "fall_time_ns": _param(m.fall_time / NS),
        "width_ns": _param(m.width / NS),
        "on_level": _param(m.on_level),
        "off_level": _param(m.off_level),
        "extinction_ratio": _param(m.extinction_ratio),
        "ripple_rms_fraction": _param(m.ripple_rms_fraction),
    }
    if m.transmittance is not None:
        report["parameters"]["transmittance"] = _param(m.transmittance)
    report["warnings"].extend(m.warnings)
    report["flags"].update(m.flags)
    _write_curve(args.curve_out, ["t_ns", "y_data"], [t["t_ns"], t["intensity"]])
    return True


def _odmr(args, report) -> bool:
    t = _load(args.file, csvio.ODMR, report)
    sweep = odmr.OdmrSweep(t["freq_mhz"] * MHZ, t["fluorescence"])
    res = odmr.fit_odmr(sweep)
    report["parameters"] = {
        "contrast_direct": _param(res.contrast_direct),
        "contrast_lorentzian": _param(res.contrast_lorentzian, res.contrast_error),
        "center_frequency_mhz": _param(res.center_frequency / MHZ, res.center_frequency_error / MHZ),
        "linewidth_mhz": _param(res.linewidth / MHZ, res.linewidth_error / MHZ),
        "baseline": _param(res.baseline, res.baseline_error),
    }
    report["warnings"].extend(res.warnings)
    report["flags"].update(res.flags)
    _write_curve(args.curve_out, ["freq_mhz", "y_data", "y_fit"],
                 [sweep.frequency / MHZ, sweep.fluorescence, res(sweep.frequency)])
    return res.converged


ANALYZERS = {
    "knife-edge": (_knife_edge, lambda a: list(a.files)),
    "caustic": (_caustic, lambda a: [a.file]),
    "g2": (_g2, lambda a: list(a.files)),
    "saturation": (_saturation, lambda a: [a.file] + ([a.background] if a.background else [])),
    "polarization": (_polarization, lambda a: [a.file]),
    "spectrum": (_spectrum, lambda a: [a.file]),
    "pulse": (_pulse, lambda a: [a.file]),
    "odmr": (_odmr, lambda a: [a.file]),
}


# -- simulate -------------------------------------------------------------------

def _emit(path, header, columns):
    with _output(path) as fh:
        csvio.write_csv(fh, header, columns)


def _sim_knife_edge(a):
    geom = beam.BeamGeometry(a.w0_um * UM, a.zr_um * UM, a.z0_um * UM, a.lambda_nm * NM)
    zs = a.z_um or [0.0]
    z_col, x_col, p_col = [], [], []
    for i, z in enumerate(zs):
        w = float(beam.width_at(geom, z * UM)) / UM
        half = a.span_w * w
        x = np.linspace(-half, half, a.points)
        scan = synth.gen_knife_edge(geom, z * UM, x * UM, a.p0_uw * UW, a.noise, a.seed + i)
        z_col.extend([z] * a.points)
        x_col.extend(x)
        p_col.extend(scan.power / UW)
    if len(zs) == 1:
        _emit(a.out, ["x_um", "power_uW"], [x_col, p_col])
    else:
        _emit(a.out, ["z_um", "x_um", "power_uW"], [z_col, x_col, p_col])


def _sim_caustic(a):
    geom = beam.BeamGeometry(a.w0_um * UM, a.zr_um * UM, a.z0_um * UM, a.lambda_nm * NM)
    z = geom.z0 + np.linspace(-a.span_zr, a.span_zr, a.points) * geom.z_r
    z, w = synth.gen_caustic(geom, z, a.noise, a.seed)
    _emit(a.out, ["z_um", "w_um"], [z / UM, w / UM])


def _sim_g2(a):
    if a.poisson_rate is not None:
        ta = synth.gen_poisson_stream(a.poisson_rate, a.duration_ns, a.seed, 0)
        tb = synth.gen_poisson_stream(a.poisson_rate, a.duration_ns, a.seed + 1, 1)
    else:
        ta, tb = synth.gen_photon_stream(a.emitters, a.excitation_rate, a.decay_rate, a.duration_ns, a.seed)
    _emit(a.out, ["t_ns"], [ta.arrival_times])
    _emit(a.out_b, ["t_ns"], [tb.arrival_times])


def _sim_saturation(a):
    p_max = a.p_max_uw if a.p_max_uw is not None else 4.0 * a.p_sat_uw
    p = np.linspace(p_max / a.points, p_max, a.points) * UW
    curve = synth.gen_saturation(a.a, a.p_sat_uw * UW, a.b / UW, p, a.noise, a.seed, a.noise_model, a.integration_s)
    counts = curve.counts
    if a.background_out:
        _, bg = synth.gen_background(a.bg_slope / UW, a.bg_intercept, p, a.noise, a.seed + 1)
        counts = counts + a.bg_slope / UW * p + a.bg_intercept
        _emit(a.background_out, ["power_uW", "counts_per_s"], [p / UW, bg])
    _emit(a.out, ["power_uW", "counts_per_s"], [p / UW, counts])


def _sim_polarization(a):
    ang = np.arange(a.points) * a.step_deg
    sw = synth.gen_polarization(a.offset, a.amplitude, a.max_angle_deg, ang, a.noise, a.seed)
    _emit(a.out, ["angle_deg", "counts_per_s"], [sw.angle, sw.counts])


def _sim_spectrum(a):
    n = int(round((a.wl_max - a.wl_min) / a.step_nm)) + 1
    grid = a.wl_min + a.step_nm * np.arange(n)
    s = synth.gen_spectrum(a.zpl_weight, a.nv0_weight, grid, a.seed, a.noise)
    _emit(a.out, ["wavelength_nm", "intensity"], [s.wavelength, s.intensity])


def _sim_pulse(a):
    tr = synth.gen_pulse(a.rise_ns, a.fall_ns, a.width_ns, a.on_level, a.extinction_ratio,
                         a.ripple, a.sample_ns, a.seed, a.noise)
    _emit(a.out, ["t_ns", "intensity"], [tr.time, tr.samples])


def _sim_odmr(a):
    f = np.linspace(a.f0_mhz - a.span_mhz, a.f0_mhz + a.span_mhz, a.points)
    sw = synth.gen_odmr(a.baseline, a.contrast, a.f0_mhz * MHZ, a.fwhm_mhz * MHZ, f * MHZ,
                        a.noise, a.seed, a.noise_model, a.integration_s)
    _emit(a.out, ["freq_mhz", "fluorescence"], [f, sw.fluorescence])


SIMULATORS = {
    "knife-edge": _sim_knife_edge,
    "caustic": _sim_caustic,
    "g2": _sim_g2,
    "saturation": _sim_saturation,
    "polarization": _sim_polarization,
    "spectrum": _sim_spectrum,
    "pulse": _sim_pulse,
    "odmr": _sim_odmr,
}


# -- argument parsing -----------------------------------------------------------

def _odd_positive(text):
    v = int(text)
    if v < 1 or v % 2 == 0:
        raise argparse.ArgumentTypeError("must be an odd positive integer")
    return v


def _common(p):
    p.add_argument("--out", help="report destination (default stdout)")
    p.add_argument("--curve-out", help="write x, y_data, y_fit samples to this CSV")
    p.add_argument("--format", choices=("json", "flat"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nvexcite", description="NV-centre excitation characterisation toolkit")
    parser.add_argument("--version", action="version", version=f"nvexcite {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="SUBCOMMAND")
    sub.required = True

    p = sub.add_parser("knife-edge", help="fit knife-edge scans (erfc profile)")
    p.add_argument("files", nargs="+")
    p.add_argument("--z-um", type=float, action="append", help="axial position of each file (repeat per file)")
    p.add_argument("--lambda-nm", type=float, help="wavelength; with >= 4 positions also fits the caustic")
    _common(p)

    p = sub.add_parser("caustic", help="fit W(z) and derive M^2")
    p.add_argument("file")
    p.add_argument("--lambda-nm", type=float, required=True)
    p.add_argument("--focal-mm", type=float)
    p.add_argument("--beam-diameter-mm", type=float)
    _common(p)

    p = sub.add_parser("g2", help="second-order correlation of two timestamp channels")
    p.add_argument("files", nargs=2, metavar="CHANNEL")
    p.add_argument("--window-ns", type=float, default=150.0, help="half-width of the delay window")
    p.add_argument("--bin-ns", type=float, default=0.4)
    p.add_argument("--smoothing-bins", type=_odd_positive, default=3)
    p.add_argument("--workers", type=int, default=1)
    _common(p)

    p = sub.add_parser("saturation", help="fit the fluorescence saturation law")
    p.add_argument("file")
    p.add_argument("--background", help="background counts versus power (same columns)")
    p.add_argument("--weighting", choices=("relative", "uniform"), default="relative")
    _common(p)

    p = sub.add_parser("polarization", help="fit the excitation polarization response")
    p.add_argument("file")
    _common(p)

    p = sub.add_parser("spectrum", help="ZPL detection and charge-state check")
    p.add_argument("file")
    p.add_argument("--nv0-threshold", type=float, default=photophys.DEFAULT_NV0_THRESHOLD)
    _common(p)

    p = sub.add_parser("pulse", help="rise/fall, extinction ratio and ripple of an optical pulse")
    p.add_argument("file")
    p.add_argument("--input-power", type=float, help="reference input level for transmittance")
    p.add_argument("--nominal-width-ns", type=float)
    _common(p)

    p = sub.add_parser("odmr", help="ODMR contrast (direct and Lorentzian)")
    p.add_argument("file")
    _common(p)

    sim = sub.add_parser("simulate", help="write synthetic datasets in the analyzers' CSV schemas")
    kinds = sim.add_subparsers(dest="kind", parser_class=_Parser, metavar="KIND")
    kinds.required = True

    def kind(name, help_text):
        q = kinds.add_parser(name, help=help_text)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--out", help="CSV destination (default stdout)")
        return q

    q = kind("knife-edge", "knife-edge scan(s)")
    q.add_argument("--w0-um", type=float, default=11.9)
    q.add_argument("--zr-um", type=float, default=700.0)
    q.add_argument("--z0-um", type=float, default=0.0)
    q.add_argument("--lambda-nm", type=float, default=532.0)
    q.add_argument("--z-um", type=float, action="append", help="scan position; repeat for a combined file")
    q.add_argument("--points", type=int, default=40)
    q.add_argument("--span-w", type=float, default=2.0, help="half-range in units of W(z)")
    q.add_argument("--p0-uw", type=float, default=1000.0)
    q.add_argument("--noise", type=float, default=0.0)

    q = kind("caustic", "beam radius versus z")
    q.add_argument("--w0-um", type=float, default=11.9)
    q.add_argument("--zr-um", type=float, default=700.0)
    q.add_argument("--z0-um", type=float, default=0.0)
    q.add_argument("--lambda-nm", type=float, default=532.0)
    q.add_argument("--points", type=int, default=15)
    q.add_argument("--span-zr", type=float, default=5.0)
    q.add_argument("--noise", type=float, default=0.03)

    q = kind("g2", "two-channel photon timestamps")
    q.add_argument("--out-b", required=True, help="second channel CSV")
    q.add_argument("--emitters", type=int, default=1)
    q.add_argument("--excitation-rate", type=float, default=0.05, help="per ns")
    q.add_argument("--decay-rate", type=float, default=0.1, help="per ns")
    q.add_argument("--duration-ns", type=float, default=1e7)
    q.add_argument("--poisson-rate", type=float, help="per ns; emit uncorrelated streams instead")

    q = kind("saturation", "counts versus excitation power")
    q.add_argument("--a", type=float, default=1e5, help="saturated count rate")
    q.add_argument("--p-sat-uw", type=float, default=258.0)
    q.add_argument("--b", type=float, default=0.0, help="linear term, counts/s per uW")
    q.add_argument("--points", type=int, default=25)
    q.add_argument("--p-max-uw", type=float)
    q.add_argument("--noise", type=float, default=0.02)
    q.add_argument("--noise-model", choices=("gaussian", "poisson"), default="gaussian")
    q.add_argument("--integration-s", type=float, default=1.0)
    q.add_argument("--background-out", help="also write a background file and add it to the signal")
    q.add_argument("--bg-slope", type=float, default=0.0, help="counts/s per uW")
    q.add_argument("--bg-intercept", type=float, default=0.0)

    q = kind("polarization", "counts versus polarization angle")
    q.add_argument("--offset", type=float, default=1e5)
    q.add_argument("--amplitude", type=float, default=4e4)
    q.add_argument("--max-angle-deg", type=float, default=41.2)
    q.add_argument("--points", type=int, default=36)
    q.add_argument("--step-deg", type=float, default=10.0)
    q.add_argument("--noise", type=float, default=0.02)

    q = kind("spectrum", "emission spectrum")
    q.add_argument("--zpl-weight", type=float, default=0.3)
    q.add_argument("--nv0-weight", type=float, default=0.0)
    q.add_argument("--wl-min", type=float, default=500.0)
    q.add_argument("--wl-max", type=float, default=900.0)
    q.add_argument("--step-nm", type=float, default=0.5)
    q.add_argument("--noise", type=float, default=0.0, help="absolute noise on the unit-peak spectrum")

    q = kind("pulse", "oscilloscope trace of one optical pulse")
    q.add_argument("--rise-ns", type=float, default=28.0)
    q.add_argument("--fall-ns", type=float, default=28.0)
    q.add_argument("--width-ns", type=float, default=1000.0)
    q.add_argument("--on-level", type=float, default=1.0)
    q.add_argument("--extinction-ratio", type=float, default=1e3)
    q.add_argument("--ripple", type=float, default=0.0)
    q.add_argument("--sample-ns", type=float, default=0.8)
    q.add_argument("--noise", type=float, default=0.0)

    q = kind("odmr", "fluorescence versus microwave frequency")
    q.add_argument("--baseline", type=float, default=1.0)
    q.add_argument("--contrast", type=float, default=0.279)
    q.add_argument("--f0-mhz", type=float, default=2870.0)
    q.add_argument("--fwhm-mhz", type=float, default=10.0)
    q.add_argument("--span-mhz", type=float, default=25.0)
    q.add_argument("--points", type=int, default=101)
    q.add_argument("--noise", type=float, default=0.01)
    q.add_argument("--noise-model", choices=("gaussian", "poisson"), default="gaussian")
    q.add_argument("--integration-s", type=float, default=1.0)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")

    try:
        if args.command == "simulate":
            SIMULATORS[args.kind](args)
            return EXIT_OK
        analyze, inputs = ANALYZERS[args.command]
        report = _report(args, args.command, inputs(args))
        ok = analyze(args, report)
    except (OSError, ValueError, UnicodeDecodeError) as exc:
        kind = "format error" if isinstance(exc, (csvio.CsvFormatError, UnicodeDecodeError)) else "error"
        print(f"nvexcite {args.command}: {kind}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for w in report["warnings"]:
        log.warning(w)
    with _output(args.out) as fh:
        fh.write(csvio.serialize_report(report, args.format))
    if not ok:
        print(f"nvexcite {args.command}: fit did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
