import math

from hypothesis import assume, given, settings, strategies as st
import numpy as np
import pytest

from heraldmem.constants import TWO_PI
from heraldmem.storage import (ConversionError, branching_to_f2, coherent_conversions,
                               efficiency_curves, herald_from_single_photon,
                               heralding_efficiency, loss_fractions, purcell_rate,
                               single_photon_heralding, storage_efficiency,
                               storage_from_transfer, transfer_from_storage)


def _steady_state_fractions(g, kappa, kappa_1, gamma_t):
    """Weak resonant drive: solve 0 = M (a, sigma) + drive for unit input flux."""
    M = np.array([[-kappa, -1j * g], [-1j * g, -gamma_t]], dtype=complex)
    a, s = np.linalg.solve(M, -np.array([math.sqrt(2 * kappa_1), 0.0]))
    r = -1.0 + math.sqrt(2 * kappa_1) * a
    return abs(r) ** 2, 2 * (kappa - kappa_1) * abs(a) ** 2, 2 * gamma_t * abs(s) ** 2


@pytest.mark.parametrize("detuning", [0.0, 20e6, 60e6, 200e6])
def test_loss_fractions_match_input_output_solution(cfg, detuning):
    c = cfg.with_(mu_fc_sq=1.0, mu_rc_sq=1.0)
    gp = purcell_rate(c.g_h, c.kappa_h, detuning)
    lf = loss_fractions(c, gp)
    pr, pc, pa = _steady_state_fractions(c.g_q, c.kappa_q, c.kappa_1q, c.gamma + gp)
    assert lf.p_reflected == pytest.approx(pr, rel=1e-12)
    assert lf.p_cavity_loss == pytest.approx(pc, rel=1e-12)
    assert lf.p_atom_scattered == pytest.approx(pa, rel=1e-12)
    assert storage_efficiency(c, detuning) == pytest.approx(pa * branching_to_f2(c.gamma, gp),
                                                            rel=1e-12)


def test_fractions_sum_to_one(cfg):
    for d in np.linspace(-150e6, 150e6, 31):
        lf = loss_fractions(cfg, purcell_rate(cfg.g_h, cfg.kappa_h, d))
        assert lf.p_reflected + lf.p_cavity_loss + lf.p_atom_scattered == pytest.approx(1.0)


def test_purcell_rate_lorentzian(cfg):
    g0 = purcell_rate(cfg.g_h, cfg.kappa_h, 0.0)
    assert g0 == pytest.approx(cfg.g_h ** 2 / cfg.kappa_h)
    assert purcell_rate(cfg.g_h, cfg.kappa_h, cfg.kappa_h / TWO_PI) == pytest.approx(g0 / 2)


def test_branching_limits():
    assert branching_to_f2(1.0, 0.0) == 0.5
    assert branching_to_f2(1.0, math.inf) == 1.0
    assert branching_to_f2(1.0, 1.0) == pytest.approx(0.75)


def test_model_values_at_resonance(cfg):
    assert storage_efficiency(cfg, 0.0) == pytest.approx(0.52, abs=0.05)
    assert heralding_efficiency(cfg, 0.0) == pytest.approx(0.11, abs=0.02)


def test_no_herald_coupling_no_heralds(cfg):
    c = cfg.with_(g_herald=0.0)
    assert heralding_efficiency(c, 0.0) == 0.0
    # free-space branching alone: half of the scattered light returns to F=2
    lf = loss_fractions(c, 0.0)
    assert storage_efficiency(c, 0.0) == pytest.approx(0.5 * lf.p_atom_scattered)


def test_curves_symmetric_and_peaked(cfg):
    s, h = efficiency_curves(cfg, np.linspace(-100e6, 100e6, 21))
    assert s.estimate == pytest.approx(s.estimate[::-1])
    assert np.argmax(s.estimate) == 10 and np.argmax(h.estimate) == 10
    assert np.all(s.sigma == 0)


nbar = st.floats(0.01, 50.0, allow_nan=False)


# 1 - p_t is only stored to double precision, so the round trip loses
# about exp(n p_s) ulps; p_t <= 0.99 keeps that below 1e-12
@settings(max_examples=300, deadline=None)
@given(p_s=st.floats(1e-6, 1.0), n=nbar)
def test_transfer_storage_inverse(p_s, n):
    p_t = transfer_from_storage(p_s, n)
    if p_t <= 0.99:
        assert storage_from_transfer(p_t, n) == pytest.approx(p_s, rel=1e-12)


@settings(max_examples=300, deadline=None)
@given(p_t=st.floats(0.0, 0.99), n=nbar)
def test_storage_transfer_inverse(p_t, n):
    assume(p_t <= -math.expm1(-n))  # p_s <= 1
    assert transfer_from_storage(storage_from_transfer(p_t, n), n) == pytest.approx(p_t, rel=1e-12,
                                                                                   abs=1e-300)


@settings(max_examples=300, deadline=None)
@given(p_t=st.floats(1e-9, 0.999), p_h1=st.floats(1e-6, 1.0), n=nbar)
def test_heralding_conversion_inverse(p_t, p_h1, n):
    p_hn = herald_from_single_photon(p_h1, p_t, n)
    assert single_photon_heralding(p_hn, p_t, n) == pytest.approx(p_h1, rel=1e-12)


def test_conversion_limits_and_errors():
    assert single_photon_heralding(0.1, 0.0, 0.5) == pytest.approx(0.2)
    with pytest.raises(ConversionError):
        storage_from_transfer(1.0, 0.5)
    with pytest.raises(ValueError):
        transfer_from_storage(0.5, 0.0)
    with pytest.raises(ValueError):
        coherent_conversions(0.5)
    d = coherent_conversions(0.5, p_t_nbar=0.2, p_h_nbar=0.03)
    assert d["p_s"] == pytest.approx(-math.log(0.8) / 0.5)
    assert d["p_h1"] == pytest.approx(-(0.03 / 0.5) * math.log(0.8) / 0.2)
