import functools
import json

import numpy as np
import pytest

from nvexcite import cli, csvio, odmr


def _sim(tmp_path, kind, *extra, name=None):
    out = tmp_path / (name or f"{kind}.csv")
    assert cli.run(["simulate", kind, "--seed", "7", "--out", str(out), *extra]) == 0
    return out


def _analyze(tmp_path, *argv, code=0, name="report.json"):
    rep = tmp_path / name
    assert cli.run([*argv, "--out", str(rep)]) == code
    return json.loads(rep.read_text()) if rep.exists() else None


# -- csv parsing -----------------------------------------------------------------

def _csv(tmp_path, text, name="in.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_by_header_name_in_any_order(tmp_path):
    p = _csv(tmp_path, "# comment\npower_uW,x_um\n\n1.0,-2\n0.5,0\n0.0,2\n")
    t = csvio.parse_csv(p, csvio.KNIFE_EDGE)
    np.testing.assert_array_equal(t["x_um"], [-2, 0, 2])
    np.testing.assert_array_equal(t["power_uW"], [1.0, 0.5, 0.0])
    assert "z_um" not in t and len(t) == 3 and not t.warnings


def test_missing_column_is_named(tmp_path):
    p = _csv(tmp_path, "x_um,power\n1,2\n")
    with pytest.raises(csvio.CsvFormatError, match="power_uW"):
        csvio.parse_csv(p, csvio.KNIFE_EDGE)


def test_unknown_column_warns(tmp_path):
    p = _csv(tmp_path, "t_ns,channel\n1,0\n2,0\n")
    t = csvio.parse_csv(p, csvio.TIMESTAMPS)
    assert any("channel" in w for w in t.warnings)


def test_non_numeric_cell_reports_line(tmp_path):
    p = _csv(tmp_path, "t_ns\n1.0\n2.0\nabc\n")
    with pytest.raises(csvio.CsvFormatError, match=r":4:.*non-numeric"):
        csvio.parse_csv(p, csvio.TIMESTAMPS)


@pytest.mark.parametrize(
    "text",
    ["t_ns,t_ns\n1,2\n", "t_ns\n", "t_ns\n1,2\n", "t_ns\nnan\n", ""],
)
def test_malformed_files_rejected(tmp_path, text):
    with pytest.raises(csvio.CsvFormatError):
        csvio.parse_csv(_csv(tmp_path, text), csvio.TIMESTAMPS)


def test_write_parse_round_trip(tmp_path):
    p = tmp_path / "rt.csv"
    vals = [0.1, 1 / 3, 2.5e-300]
    with open(p, "w") as fh:
        csvio.write_csv(fh, ["t_ns"], [vals])
    np.testing.assert_array_equal(csvio.parse_csv(p, csvio.TIMESTAMPS)["t_ns"], vals)


def test_digest_depends_on_content_and_order(tmp_path):
    a, b = _csv(tmp_path, "t_ns\n1\n", "a.csv"), _csv(tmp_path, "t_ns\n2\n", "b.csv")
    assert csvio.file_digest([a, b]) != csvio.file_digest([b, a])
    assert csvio.file_digest([a]) == csvio.file_digest([a])


def test_flat_serialization():
    text = csvio.serialize_report(
        {"p": {"v": {"value": 1.5, "error": None}}, "ok": True, "w": ["x"], "r": float("inf")}, "flat"
    )
    lines = text.splitlines()
    assert "p.v.value=1.5" in lines and "p.v.error=null" in lines
    assert "ok=true" in lines and 'w[0]="x"' in lines and 'r="inf"' in lines


# -- round trips -----------------------------------------------------------------

def test_caustic_round_trip(tmp_path):
    f = _sim(tmp_path, "caustic")
    rep = _analyze(tmp_path, "caustic", str(f), "--lambda-nm", "532",
                   "--focal-mm", "3", "--beam-diameter-mm", "8")
    assert rep["subcommand"] == "caustic"
    assert rep["parameters"]["m_squared"]["value"] == pytest.approx(1.19, abs=0.12)
    assert rep["parameters"]["spot_size_nm"]["value"] > 0
    assert len(rep["input_digest"]) == 64


def test_knife_edge_with_z_option(tmp_path):
    files = []
    for i, z in enumerate(("-2000", "0", "1000")):
        files.append(str(_sim(tmp_path, "knife-edge", "--z-um", z, "--noise", "0.005", name=f"k{i}.csv")))
    args = ["knife-edge", *files]
    for z in ("-2000", "0", "1000"):
        args += ["--z-um", z]
    rep = _analyze(tmp_path, *args)
    widths = [s["width_um"]["value"] for s in rep["scans"]]
    assert widths[1] == pytest.approx(11.9, rel=0.03)
    assert widths[0] > widths[2] > widths[1]
    assert "caustic" not in rep


def test_knife_edge_combined_file_gives_caustic(tmp_path):
    args = []
    for z in (-3000, -1500, -500, 0, 500, 1500, 3000):
        args += ["--z-um", str(z)]
    f = _sim(tmp_path, "knife-edge", *args)
    curve = tmp_path / "curve.csv"
    rep = _analyze(tmp_path, "knife-edge", str(f), "--lambda-nm", "532", "--curve-out", str(curve))
    assert len(rep["scans"]) == 7
    assert rep["caustic"]["m_squared"]["value"] == pytest.approx(1.1946, rel=1e-4)
    t = csvio.parse_csv(curve, csvio.Schema(("z_um", "x_um", "y_data", "y_fit")))
    assert len(t) == 7 * 40
    np.testing.assert_allclose(t["y_fit"], t["y_data"], rtol=1e-5, atol=1e-6)


def test_knife_edge_z_count_mismatch(tmp_path):
    f = _sim(tmp_path, "knife-edge")
    assert cli.run(["knife-edge", str(f), "--z-um", "0", "--z-um", "1"]) == 1


def test_g2_round_trip(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert cli.run(["simulate", "g2", "--out", str(a), "--out-b", str(b), "--duration-ns", "2e6"]) == 0
    rep = _analyze(tmp_path, "g2", str(a), str(b), "--window-ns", "150", "--bin-ns", "0.4")
    h = rep["histogram"]
    assert h["bins"] == 751 and h["window_ns"] == 150.2
    assert any("even" in w for w in rep["warnings"])
    assert rep["parameters"]["g2_zero"]["value"] < 0.3
    assert rep["parameters"]["n_emitters"]["value"] < 1.5
    assert rep["flags"]["is_single"] is True


def test_g2_poisson_streams(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.run(["simulate", "g2", "--out", str(a), "--out-b", str(b),
                    "--poisson-rate", "0.02", "--duration-ns", "2e6"]) == 0
    rep = _analyze(tmp_path, "g2", str(a), str(b), "--window-ns", "50.2")
    assert rep["parameters"]["g2_zero"]["value"] == pytest.approx(1.0, abs=0.2)
    assert rep["histogram"]["wing_mean_g2"] == pytest.approx(1.0, abs=0.05)


def test_saturation_round_trip_with_background(tmp_path):
    bg = tmp_path / "bg.csv"
    f = _sim(tmp_path, "saturation", "--background-out", str(bg), "--bg-slope", "30", "--bg-intercept", "500")
    rep = _analyze(tmp_path, "saturation", str(f), "--background", str(bg))
    assert rep["parameters"]["p_sat_uW"]["value"] == pytest.approx(258, rel=0.1)
    assert rep["parameters"]["b_counts_per_s_per_uW"]["value"] == 0.0
    assert rep["background"]["slope_counts_per_s_per_uW"]["value"] == pytest.approx(30, rel=0.05)


def test_saturation_uniform_weighting(tmp_path):
    f = _sim(tmp_path, "saturation", "--noise", "0")
    rep = _analyze(tmp_path, "saturation", str(f), "--weighting", "uniform")
    assert rep["parameters"]["p_sat_uW"]["value"] == pytest.approx(258, rel=1e-6)


def test_polarization_round_trip(tmp_path):
    f = _sim(tmp_path, "polarization")
    rep = _analyze(tmp_path, "polarization", str(f))
    assert rep["parameters"]["max_angle_deg"]["value"] == pytest.approx(41.2, abs=1.0)


def test_spectrum_round_trip(tmp_path):
    f = _sim(tmp_path, "spectrum")
    rep = _analyze(tmp_path, "spectrum", str(f))
    assert rep["flags"] == {"zpl_present": True, "charge_state_ok": True}
    assert rep["parameters"]["zpl_wavelength_nm"]["value"] == pytest.approx(637, abs=1)
    rep = _analyze(tmp_path, "spectrum", str(f), "--nv0-threshold", "0")
    assert rep["flags"]["charge_state_ok"] is False


def test_pulse_round_trip(tmp_path):
    f = _sim(tmp_path, "pulse", "--rise-ns", "28.8")
    rep = _analyze(tmp_path, "pulse", str(f), "--input-power", "2")
    p = rep["parameters"]
    assert p["rise_time_ns"]["value"] == pytest.approx(28.8, abs=0.8)
    assert p["extinction_ratio"]["value"] == pytest.approx(1e3, rel=0.01)
    assert p["transmittance"]["value"] == pytest.approx(0.5, rel=1e-6)


def test_odmr_round_trip(tmp_path):
    f = _sim(tmp_path, "odmr", "--contrast", "0.279")
    curve = tmp_path / "c.csv"
    rep = _analyze(tmp_path, "odmr", str(f), "--curve-out", str(curve))
    p = rep["parameters"]
    assert p["contrast_lorentzian"]["value"] == pytest.approx(0.279, abs=0.01)
    assert p["center_frequency_mhz"]["value"] == pytest.approx(2870, abs=0.5)
    assert p["contrast_lorentzian"]["error"] > 0
    assert csvio.parse_csv(curve, csvio.Schema(("freq_mhz", "y_data", "y_fit"))).columns["y_fit"].size == 101


def test_flat_format(tmp_path):
    f = _sim(tmp_path, "odmr")
    rep = tmp_path / "r.txt"
    assert cli.run(["odmr", str(f), "--format", "flat", "--out", str(rep)]) == 0
    lines = rep.read_text().splitlines()
    assert 'subcommand="odmr"' in lines
    assert any(line.startswith("parameters.contrast_lorentzian.value=") for line in lines)


def test_reports_are_byte_identical(tmp_path):
    f1 = _sim(tmp_path, "saturation", name="s1.csv")
    f2 = _sim(tmp_path, "saturation", name="s2.csv")
    assert f1.read_bytes() == f2.read_bytes()
    r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
    assert cli.run(["saturation", str(f1), "--out", str(r1)]) == 0
    assert cli.run(["saturation", str(f1), "--out", str(r2)]) == 0
    assert r1.read_bytes() == r2.read_bytes()


def test_report_to_stdout(tmp_path, capsys):
    f = _sim(tmp_path, "polarization")
    assert cli.run(["polarization", str(f)]) == 0
    assert json.loads(capsys.readouterr().out)["subcommand"] == "polarization"


# -- exit codes ------------------------------------------------------------------

def test_unknown_subcommand_exits_1(capsys):
    assert cli.run(["frobnicate"]) == 1
    assert cli.run([]) == 1


def test_malformed_csv_exits_1(tmp_path, capsys):
    bad = _csv(tmp_path, "freq_mhz,fluorescence\n2860,1.0\n2861,oops\n")
    assert cli.run(["odmr", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "format error" in err and ":3:" in err


def test_missing_file_exits_1(tmp_path, capsys):
    assert cli.run(["odmr", str(tmp_path / "nope.csv")]) == 1


def test_non_convergence_exits_2(tmp_path, monkeypatch, capsys):
    f = _sim(tmp_path, "odmr")
    monkeypatch.setattr(cli.odmr, "fit_odmr", functools.partial(odmr.fit_odmr, max_iter=1))
    rep = _analyze(tmp_path, "odmr", str(f), code=2)
    assert rep["subcommand"] == "odmr"
    assert "did not converge" in capsys.readouterr().err


def test_version_flag(capsys):
    assert cli.run(["--version"]) == 0
    assert "nvexcite" in capsys.readouterr().out
