import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvexcite import odmr, synth

F0, FWHM, C = 2.87e9, 10e6, 0.279


def _grid(span=50e6, n=101, f0=F0):
    return np.linspace(f0 - span, f0 + span, n)


def test_dip_model_values():
    assert odmr.lorentzian_dip(F0, 2.0, C, F0, FWHM) == pytest.approx(2.0 * (1 - C))
    assert odmr.lorentzian_dip(F0 + FWHM / 2, 1.0, C, F0, FWHM) == pytest.approx(1 - C / 2)
    np.testing.assert_array_equal(odmr.lorentzian_dip(_grid(), 3.0, 0.0, F0, FWHM), 3.0)


def test_lorentzian_jacobian_matches_finite_differences():
    from nvexcite.fitcore import finite_difference_jacobian

    m = odmr._lorentzian_model()
    p = np.array([1.3, 0.25, F0 + 1e6, 8e6])
    f = _grid(30e6, 41)
    np.testing.assert_allclose(m.jac(p, f), finite_difference_jacobian(m.evaluate, p, f), rtol=1e-6, atol=1e-12)


def test_direct_contrast_examples():
    assert odmr.contrast_direct(odmr.OdmrSweep(_grid(n=21), np.full(21, 5.0))) == 0.0
    y = np.ones(21)
    y[10] = 0.7
    assert odmr.contrast_direct(odmr.OdmrSweep(_grid(n=21), y)) == pytest.approx(0.30)


def test_direct_contrast_on_narrow_dip():
    sw = synth.gen_odmr(1.0, C, F0, FWHM, _grid(200e6, 401))
    assert odmr.contrast_direct(sw) == pytest.approx(C, abs=0.005)


def test_noiseless_fit_exact():
    sw = synth.gen_odmr(1.0, C, F0, FWHM, _grid())
    res = odmr.fit_odmr(sw)
    assert res.converged
    np.testing.assert_allclose(
        [res.baseline, res.contrast_lorentzian, res.center_frequency, res.linewidth],
        [1.0, C, F0, FWHM],
        rtol=1e-6,
    )
    assert not res.flags["low_signal"] and not res.flags["center_at_boundary"]


def test_estimator_gap_matches_tail_oracle():
    # direct estimate on noiseless data: edge average includes the Lorentzian tails
    f = _grid()
    sw = synth.gen_odmr(1.0, C, F0, FWHM, f)
    res = odmr.fit_odmr(sw)
    hw2 = (FWHM / 2) ** 2
    edges = np.concatenate([f[:5], f[-5:]])
    i_avg = 1.0 - C * np.mean(hw2 / ((edges - F0) ** 2 + hw2))
    oracle = (i_avg - (1.0 - C)) / i_avg
    assert res.contrast_direct == pytest.approx(oracle, rel=1e-12)
    span = f[-1] - F0
    bound = FWHM**2 * 10 / (4 * span**2) * C * 2
    assert 0 < res.contrast_lorentzian - res.contrast_direct < bound
    assert abs(res.contrast_lorentzian - res.contrast_direct) < 0.01


def test_noisy_contrast_within_one_point():
    hits = sum(
        abs(odmr.fit_odmr(synth.gen_odmr(1.0, C, F0, FWHM, _grid(), 0.01, s)).contrast_lorentzian - C) < 0.01
        for s in range(100)
    )
    assert hits >= 95


def test_reversed_sweep_gives_identical_results():
    sw = synth.gen_odmr(1.0, C, F0, FWHM, _grid(), 0.01, 3)
    rev = odmr.OdmrSweep(sw.frequency[::-1], sw.fluorescence[::-1])
    a, b = odmr.fit_odmr(sw), odmr.fit_odmr(rev)
    assert a.contrast_lorentzian == b.contrast_lorentzian
    assert a.center_frequency == b.center_frequency
    assert a.contrast_direct == b.contrast_direct


def test_shallow_dip_flagged():
    sw = synth.gen_odmr(1.0, 0.02, F0, FWHM, _grid())
    assert odmr.fit_odmr(sw).flags["low_signal"]


def test_edge_resonance_flagged():
    sw = synth.gen_odmr(1.0, C, F0 + 49.8e6, FWHM, _grid())
    res = odmr.fit_odmr(sw)
    assert res.flags["center_at_boundary"]


def test_dip_fwhm_estimate():
    f = _grid(50e6, 1001)
    y = odmr.lorentzian_dip(f, 1.0, C, F0, FWHM)
    assert odmr.dip_fwhm(f, y, baseline=1.0) == pytest.approx(FWHM, rel=1e-3)


def test_sweep_validation():
    with pytest.raises(ValueError):
        odmr.OdmrSweep(np.arange(5.0), np.ones(5))
    with pytest.raises(ValueError):
        odmr.OdmrSweep(np.r_[np.arange(10.0), 3.0], np.ones(11))


@settings(max_examples=25, deadline=None)
@given(
    contrast=st.floats(0.08, 0.6),
    fwhm=st.floats(3e6, 15e6),
    shift=st.floats(-10e6, 10e6),
    base=st.floats(1e-2, 1e6),
)
def test_noiseless_round_trip_property(contrast, fwhm, shift, base):
    sw = synth.gen_odmr(base, contrast, F0 + shift, fwhm, _grid())
    res = odmr.fit_odmr(sw)
    assert res.contrast_lorentzian == pytest.approx(contrast, rel=1e-6)
    assert res.center_frequency == pytest.approx(F0 + shift, rel=1e-9)
    assert res.linewidth == pytest.approx(fwhm, rel=1e-6)
