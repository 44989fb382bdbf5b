import math

import numpy as np
import pytest

from heraldmem.cavity import (beam_radius, birefringence, decay_rates, expected_coupling,
                              mode_radius_at_centre, resonator_waist, transmission_spectrum)
from heraldmem.constants import TWO_PI

C = 299_792_458.0
LAM = 780.241e-9


def test_decay_rate_closed_form():
    # kappa = pi c / (2 L F): the field decays at half the photon loss rate FSR * 2pi/F
    L, F, T = 100e-6, 10_000.0, 100e-6
    kappa, k_out, fsr = decay_rates(L, F, T)
    assert fsr == pytest.approx(C / (2 * L), rel=1e-15)
    assert kappa == pytest.approx(math.pi * C / (2 * L * F), rel=1e-15)
    assert k_out / kappa == pytest.approx(T / (2 * math.pi / F), rel=1e-15)


@pytest.mark.parametrize("L, F, target_mhz", [(162e-6, 14_600, 31.7), (80e-6, 15_680, 59.8)])
def test_decay_rates_of_the_two_cavities(L, F, target_mhz):
    kappa, _, _ = decay_rates(L, F, 340e-6)
    assert kappa / TWO_PI / 1e6 == pytest.approx(target_mhz, rel=0.005)


def test_decay_rates_reject_bad_input():
    with pytest.raises(ValueError):
        decay_rates(0.0, 1000, 1e-4)
    with pytest.raises(ValueError):
        decay_rates(1e-4, 1000, 0.1)  # transmission above total loss


def test_symmetric_resonator_waist_formula():
    # symmetric cavity: w0^2 = (lam L / 2 pi) sqrt((2R - L)/L), waist in the middle
    R, L = 200e-6, 100e-6
    w0, z1 = resonator_waist(R, R, L, LAM)
    assert w0 ** 2 == pytest.approx(LAM * L / (2 * math.pi) * math.sqrt((2 * R - L) / L), rel=1e-12)
    assert z1 == pytest.approx(L / 2, rel=1e-12)
    assert mode_radius_at_centre(R, R, L, LAM) == pytest.approx(w0, rel=1e-12)


def test_unstable_resonator():
    with pytest.raises(ValueError, match="unstable"):
        resonator_waist(40e-6, 40e-6, 100e-6, LAM)


def test_beam_radius_at_rayleigh_range():
    w0 = 5e-6
    zr = math.pi * w0 ** 2 / LAM
    assert beam_radius(w0, zr, LAM) == pytest.approx(math.sqrt(2) * w0)


@pytest.mark.parametrize("mirrors, target_um", [
    ((340e-6, 170e-6, 162e-6), 6.5),
    ((100e-6, 90e-6, 80e-6), 3.5),
    ((290e-6, 230e-6, 80e-6), 4.8),
])
def test_centre_mode_radii(mirrors, target_um):
    assert mode_radius_at_centre(*mirrors) * 1e6 == pytest.approx(target_um, rel=0.03)


def test_birefringence_of_herald_mirrors(cfg):
    h = cfg.herald_cavity
    phase, split = birefringence([h.roc_outcoupler, h.roc_backmirror], LAM, h.fsr)
    assert abs(phase) * 1e3 == pytest.approx(1.7, abs=0.1)
    assert split == pytest.approx(phase * h.fsr / TWO_PI)
    assert birefringence([(1e-4, 1e-4)], LAM, h.fsr) == (0.0, 0.0)


def test_expected_coupling_scaling():
    g1 = expected_coupling(5e-6, 100e-6)
    assert expected_coupling(10e-6, 100e-6) == pytest.approx(g1 / 2)
    assert expected_coupling(5e-6, 400e-6) == pytest.approx(g1 / 2)
    assert expected_coupling((5e-6, 5e-6), 100e-6) == pytest.approx(g1)
    assert expected_coupling(5e-6, 100e-6, relative_dipole=0.5) == pytest.approx(g1 / 2)


def test_lorentzian_spectrum_half_width():
    kappa = TWO_PI * 30e6
    s = transmission_spectrum("lorentzian", kappa, [-30e6, 0.0, 30e6])
    assert s.transmission == pytest.approx([0.5, 1.0, 0.5])


def test_normal_mode_spectrum_peaks_near_plus_minus_g():
    kappa, g = TWO_PI * 30e6, TWO_PI * 150e6
    x = np.linspace(-300e6, 300e6, 6001)
    s = transmission_spectrum("normal_mode", kappa, x, g=g)
    assert s.transmission.max() <= 1.0
    peaks = x[np.argsort(s.transmission)[-2:]]
    assert sorted(np.abs(peaks) / 1e6) == pytest.approx([150, 150], rel=0.01)
    # an uncoupled atom gives back the empty-cavity line
    s0 = transmission_spectrum("normal_mode", kappa, x, g=0.0)
    lor = transmission_spectrum("lorentzian", kappa, x)
    assert s0.transmission == pytest.approx(lor.transmission, abs=1e-12)


def test_spectrum_validation():
    with pytest.raises(ValueError):
        transmission_spectrum("lorentzian", TWO_PI * 1e6, [1.0, 0.0])
    with pytest.raises(ValueError):
        transmission_spectrum("bogus", TWO_PI * 1e6, [0.0, 1.0])
    with pytest.raises(ValueError):
        transmission_spectrum("lorentzian", 0.0, [0.0, 1.0])
