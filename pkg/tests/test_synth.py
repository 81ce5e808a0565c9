import math

import numpy as np
import pytest

from nvexcite import beam, photonstats as ps, photophys as pp, synth

GEOM = beam.BeamGeometry(11.9e-6, 700e-6, 0.0, 532e-9)


def test_rng_seed_validation():
    with pytest.raises(ValueError):
        synth.rng(-1)
    with pytest.raises(ValueError):
        synth.rng(2**64)
    assert synth.rng(7).random() == synth.rng(7).random()
    assert synth.rng(7).random() != synth.rng(8).random()


@pytest.mark.parametrize(
    "make",
    [
        lambda s: synth.gen_knife_edge(GEOM, 0.0, np.linspace(-3e-5, 3e-5, 40), 1e-3, 0.01, s).power,
        lambda s: synth.gen_caustic(GEOM, np.linspace(-3e-3, 3e-3, 15), 0.03, s)[1],
        lambda s: synth.gen_saturation(1e5, 258e-6, 0.0, np.linspace(1e-5, 1e-3, 25), 0.02, s).counts,
        lambda s: synth.gen_saturation(1e5, 258e-6, 0.0, np.linspace(1e-5, 1e-3, 25), seed=s, noise="poisson").counts,
        lambda s: synth.gen_polarization(1e5, 4e4, 41.2, np.arange(36) * 10.0, 0.02, s).counts,
        lambda s: synth.gen_odmr(1.0, 0.279, 2.87e9, 1e7, np.linspace(2.82e9, 2.92e9, 101), 0.01, s).fluorescence,
        lambda s: synth.gen_pulse(28.0, 28.0, 1000.0, seed=s, noise_level=1e-3).samples,
        lambda s: synth.gen_spectrum(0.3, 1.0, np.arange(500.0, 900.0, 0.5), s, 0.01).intensity,
        lambda s: synth.gen_poisson_stream(0.01, 1e5, s).arrival_times,
        lambda s: np.concatenate([c.arrival_times for c in synth.gen_photon_stream(2, 0.05, 0.1, 1e5, s)]),
    ],
)
def test_generators_are_deterministic(make):
    a, b, c = make(11), make(11), make(12)
    np.testing.assert_array_equal(a, b)
    assert a.shape != c.shape or not np.array_equal(a, c)


def test_knife_edge_generator_levels():
    x = np.array([-1e-3, -5e-4, -1e-5, 0.0, 1e-5, 5e-4, 1e-3])
    s = synth.gen_knife_edge(GEOM, 0.0, x, 2e-3)
    np.testing.assert_allclose(s.power[[0, 3, 6]], [2e-3, 1e-3, 0.0], atol=1e-15)
    s = synth.gen_knife_edge(GEOM, 0.0, x, 2e-3, direction=-1)
    np.testing.assert_allclose(s.power[[0, 3, 6]], [0.0, 1e-3, 2e-3], atol=1e-15)


def test_caustic_generator_noiseless():
    z = np.linspace(-1e-3, 1e-3, 5)
    _, w = synth.gen_caustic(GEOM, z)
    np.testing.assert_array_equal(w, beam.width_at(GEOM, z))


def test_photon_stream_routing_and_span():
    a, b = synth.gen_photon_stream(3, 0.05, 0.1, 1e6, seed=5)
    assert a.span == b.span == (0.0, 1e6)
    assert a.channel_id == 0 and b.channel_id == 1
    both = np.concatenate([a.arrival_times, b.arrival_times])
    assert both.min() >= 0 and both.max() < 1e6
    # mean photon rate per emitter is 1 / (1/k_exc + 1/k_dec) = 1/30 per ns
    assert len(both) == pytest.approx(3 * 1e6 / 30.0, rel=0.02)
    assert abs(len(a) - len(b)) < 5 * math.sqrt(len(both))


def test_four_emitters_give_three_quarters():
    a, b = synth.gen_photon_stream(4, 0.05, 0.1, 1e7, seed=2)
    assert ps.g2_zero(ps.correlate(a, b, 150.2, 0.4)) == pytest.approx(0.75, abs=0.05)


def test_photon_stream_validation():
    with pytest.raises(ValueError):
        synth.gen_photon_stream(0, 0.05, 0.1, 1e5)
    with pytest.raises(ValueError):
        synth.gen_photon_stream(1, 0.0, 0.1, 1e5)


def test_saturation_generator():
    c = synth.gen_saturation(1e5, 258e-6, 0.0, [1e-6, 1e-5, 1e-4, 258e-6, 2.58e-3])
    assert c.counts[3] == pytest.approx(5e4)
    assert c.counts[4] == pytest.approx(1e5 * 10 / 11)
    with pytest.raises(ValueError):
        synth.gen_saturation(1e5, 258e-6, 0.0, np.linspace(1e-4, 1e-3, 5), noise="bogus")


def test_poisson_counting_noise_scale():
    c = synth.gen_saturation(1e5, 258e-6, 0.0, np.linspace(1e-4, 1e-3, 2000), seed=1, noise="poisson", integration_time=0.01)
    k = c.counts * 0.01
    np.testing.assert_allclose(k, np.round(k), atol=1e-9)
    # Poisson: variance equals mean in count units
    mean = pp.saturation_curve(c.power, 1e5, 258e-6) * 0.01
    assert np.mean((k - mean) ** 2 / mean) == pytest.approx(1.0, abs=0.1)


def test_background_generator():
    p, bg = synth.gen_background(3e6, 40.0, [0.0, 1e-4])
    np.testing.assert_allclose(bg, [40.0, 340.0])
    np.testing.assert_array_equal(p, [0.0, 1e-4])


def test_polarization_generator_maxima():
    sw = synth.gen_polarization(1.0, 0.3, 20.0, [20.0, 65.0, 110.0, 155.0, 200.0, 245.0, 290.0, 335.0])
    np.testing.assert_allclose(sw.counts, [1.3, 0.7] * 4)
    with pytest.raises(ValueError):
        synth.gen_polarization(1.0, 1.5, 0.0, np.arange(10.0))


def test_pulse_generator_levels_and_edges():
    tr = synth.gen_pulse(28.0, 40.0, 1000.0, on_level=2.0, extinction_ratio=100.0)
    assert tr.samples.max() == pytest.approx(2.0, rel=1e-9)
    assert tr.samples.min() == pytest.approx(0.02, rel=1e-9)
    assert tr.nominal_pulse_width == 1000.0
    assert synth.pulse_shape(500.0, 500.0, 1500.0, 28.0, 28.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        synth.gen_pulse(28.0, 28.0, 50.0)


def test_pulse_ripple_zero_is_clean():
    a = synth.gen_pulse(28.0, 28.0, 1000.0)
    b = synth.gen_pulse(28.0, 28.0, 1000.0, ripple_fraction=0.0)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_odmr_generator():
    f = np.linspace(2.82e9, 2.92e9, 11)
    flat = synth.gen_odmr(3.0, 0.0, 2.87e9, 1e7, f)
    np.testing.assert_array_equal(flat.fluorescence, 3.0)
    dip = synth.gen_odmr(1.0, 0.279, 2.87e9, 1e7, f)
    assert dip.fluorescence[5] == pytest.approx(0.721)
    with pytest.raises(ValueError):
        synth.gen_odmr(1.0, 1.0, 2.87e9, 1e7, f)


def test_spectrum_components():
    assert synth.nvm_sideband(599.0) == 0.0
    assert synth.nvm_sideband(700.0) == pytest.approx(1.0)
    wl = np.arange(600.0, 900.0, 0.5)
    assert wl[np.argmax(synth.nvm_sideband(wl))] == 700.0
    assert synth.nv0_band(575.0) == 0.0 and synth.nv0_band(650.0) == 0.0
    assert synth.nv0_band(612.5) == pytest.approx(1.0)


def test_spectrum_without_zpl_or_nv0():
    wl = np.arange(500.0, 900.0, 0.5)
    s = synth.gen_spectrum(0.0, 0.0, wl)
    np.testing.assert_array_equal(s.intensity, synth.nvm_sideband(wl))
    assert not pp.analyze_spectrum(s).zpl_present
    with pytest.raises(ValueError):
        synth.gen_spectrum(-0.1, 0.0, wl)
