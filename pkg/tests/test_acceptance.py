"""Acceptance suite: one test per criterion, at the stated tolerances.

Run ``pytest tests/test_acceptance.py`` and read the "acceptance criteria"
section at the end of the output for the per-criterion PASS/FAIL lines.
"""

import filecmp
import math
import os

import numpy as np
import pytest

from heraldmem.cavity import birefringence, decay_rates, mode_radius_at_centre
from heraldmem.cli import main
from heraldmem.constants import TWO_PI
from heraldmem.dynamics import TrialParams, run_trials
from heraldmem.fitting import fit_detuning_model
from heraldmem.scenarios import (HERALD_X, HERALD_Y, QUBIT_MIRRORS, poisson_stream_dataset,
                                 run_scenario, synthetic_detuning_data)
from heraldmem.stats import CountTable, aggregate_atoms, bernoulli_ci, g2
from heraldmem.storage import (efficiency_curves, herald_from_single_photon,
                               single_photon_heralding, storage_from_transfer,
                               transfer_from_storage)
from heraldmem.tomography import (average_from_process, channel_probabilities, fidelities,
                                  process_mle, random_channel, sample_counts)

LAM = 780.241e-9


def _detail(record_property, text):
    record_property("detail", text)


@pytest.mark.criterion(1, "cavity decay rates 31.7 / 59.8 MHz within 0.5 %")
def test_c01_cavity_rates(record_property):
    kq = decay_rates(162e-6, 14600, 340e-6)[0] / TWO_PI / 1e6
    kh = decay_rates(80e-6, 15680, 340e-6)[0] / TWO_PI / 1e6
    _detail(record_property, f"kappa_Q {kq:.3f} MHz, kappa_H {kh:.3f} MHz")
    assert abs(kq - 31.7) <= 0.005 * 31.7
    assert abs(kh - 59.8) <= 0.005 * 59.8


@pytest.mark.criterion(2, "centre mode radii 6.5 / (3.5, 4.8) um within 3 %")
def test_c02_mode_geometry(record_property):
    got = [mode_radius_at_centre(*m, LAM) * 1e6 for m in (QUBIT_MIRRORS, HERALD_X, HERALD_Y)]
    _detail(record_property, "radii " + ", ".join(f"{w:.3f}" for w in got) + " um")
    for w, target in zip(got, (6.5, 3.5, 4.8)):
        assert abs(w - target) <= 0.03 * target


@pytest.mark.criterion(3, "herald birefringent round-trip phase 1.7 +/- 0.1 mrad")
def test_c03_birefringence(cfg, record_property):
    h = cfg.herald_cavity
    phase, _ = birefringence([h.roc_outcoupler, h.roc_backmirror], LAM, h.fsr)
    _detail(record_property, f"phase {abs(phase) * 1e3:.3f} mrad")
    assert abs(abs(phase) * 1e3 - 1.7) <= 0.1


@pytest.mark.criterion(4, "analytic p_s(0) = 0.52 +/- 0.05, p_H1(0) = 0.11 +/- 0.02")
def test_c04_analytic_model(cfg, record_property):
    s, h = efficiency_curves(cfg, [0.0])
    _detail(record_property, f"p_s(0) {s.estimate[0]:.4f}, p_H1(0) {h.estimate[0]:.4f}")
    assert abs(s.estimate[0] - 0.52) <= 0.05
    assert abs(h.estimate[0] - 0.11) <= 0.02


@pytest.mark.criterion(5, "1e5 write trials vs efficiency curves within 10 % at 0 and 2 kappa_H")
def test_c05_dynamics_vs_model(cfg, record_property):
    # uncalibrated geometric drive overlap, so the check is not circular
    n = 100_000
    escape = cfg.kappa_1h / cfg.kappa_h
    params = TrialParams(read=None, statistics="single", inputs=("R", "L"), drive="geometric",
                         herald_detection="lumped")
    lines, ok = [], True
    for k, det in enumerate((0.0, 2 * cfg.kappa_h / TWO_PI)):
        c = cfg.with_(herald_detuning=det)
        ds = run_trials(c, params, n, 500 + k)
        ps_sim = np.count_nonzero(ds["stored"]) / n
        ph_sim = np.count_nonzero(ds["herald_emitted"]) / n * c.eta / escape
        s, h = efficiency_curves(c, [det])
        rs, rh = ps_sim / s.estimate[0] - 1, ph_sim / h.estimate[0] - 1
        lines.append(f"det {det / 1e6:.0f} MHz: p_s {rs:+.3f}, p_H1 {rh:+.3f} rel")
        ok &= abs(rs) <= 0.10 and abs(rh) <= 0.10
    _detail(record_property, "; ".join(lines))
    assert ok


@pytest.mark.criterion(6, "herald click probability 0.105 within 3 sigma at 1e5 trials")
def test_c06_efficiency_chain(cfg, record_property):
    # full write dynamics with the mirror escape inside the cavity model and
    # the remaining detection elements applied as Bernoulli thinning
    n = 100_000
    target = 0.52 * 0.79 * 0.85 * 0.80 * 0.75 * 0.50
    params = TrialParams(read=None, statistics="single", inputs=("R", "L"))
    k = np.count_nonzero(run_trials(cfg, params, n, 600)["herald_click"])
    sigma = math.sqrt(target * (1 - target) / n)
    _detail(record_property, f"simulated {k / n:.4f} vs {target:.4f}, {(k / n - target) / sigma:+.2f} sigma")
    assert abs(k / n - target) <= 3 * sigma


@pytest.mark.criterion(7, "average/process identity to 1e-6 on 50 channels; MLE F_p within 0.01")
def test_c07_tomography_identity(record_property):
    rng = np.random.default_rng(700)
    channels = [random_channel(rng) for _ in range(50)]
    worst = max(abs(fidelities(ch)["identity_residual"]) for ch in channels)
    shots = 100_000 // 18   # per (input, basis) cell, 1e5 shots in total
    errs = []
    for ch in channels[:10]:
        table = CountTable(sample_counts(channel_probabilities(ch), shots, rng))
        errs.append(abs(process_mle(table).process_fidelity - ch.process_fidelity))
    _detail(record_property, f"identity residual {worst:.1e}, worst MLE error {max(errs):.4f}")
    assert worst <= 1e-6
    assert max(errs) <= 0.01


@pytest.mark.criterion(8, "F_p = 0.922 maps to average fidelity 0.948, consistent with 0.947 +/- 0.002")
def test_c08_fidelity_consistency(record_property):
    f_avg = average_from_process(0.922)
    # quoted errors: 0.002 on the average, 0.003 on F_p (scaled by 2/3)
    tol = math.hypot(0.002, 2 / 3 * 0.003)
    _detail(record_property, f"(2 F_p + 1)/3 = {f_avg:.4f}, tolerance {tol:.4f}")
    assert round(f_avg, 3) == 0.948
    assert abs(f_avg - 0.947) <= tol


@pytest.mark.criterion(9, "coherence: 62 kHz +/- 5 % oscillation, flat circular fidelity")
def test_c09_coherence(cfg, record_property):
    b = run_scenario("coherence", cfg, seed=9)
    checks = {c.label: c for c in b.comparisons}
    freq = checks["linear-input oscillation frequency"]
    _detail(record_property, f"frequency {freq.computed:.2f} kHz, "
            f"{len(b.comparisons) - b.n_failed}/{len(b.comparisons)} scenario checks")
    assert freq.passed
    assert checks["circular fidelity flat: chi2 p-value"].passed
    assert checks["circular fidelity flat: |slope|/sigma"].passed
    assert checks["zero-field fidelity starts above the bound and crosses it once"].passed


@pytest.mark.criterion(10, "herald filtering raises fidelity; truncation monotone in cut time")
def test_c10_filtering_and_truncation(cfg, record_property):
    # the tomography scenario injects a preparation error fitted to the
    # unconditioned fidelity; the truncation pattern is checked on the
    # reference configuration
    tomo = run_scenario("write-read-tomo", cfg, seed=10)
    trunc = run_scenario("truncation", cfg, seed=10)
    fu = tomo.values["F_s avg unconditioned (counts)"][0]
    fc = tomo.values["F_s avg conditioned (counts)"][0]
    _detail(record_property, f"unconditioned {fu:.3f}, conditioned {fc:.3f}, "
            f"truncation checks {len(trunc.comparisons) - trunc.n_failed}/{len(trunc.comparisons)}")
    assert tomo.values["fitted preparation error (total)"] > 0
    assert fc > fu
    assert tomo.n_failed == 0
    assert trunc.n_failed == 0


@pytest.mark.criterion(11, "detuning fit recovers (0.8, 0.95, 0.6, 0.3) within fit CIs")
def test_c11_fit_recovery(cfg, record_property):
    fit = fit_detuning_model(*synthetic_detuning_data(cfg, 11), cfg)
    truth = {"mu_fc_sq": cfg.mu_fc_sq, "mu_rc_sq": cfg.mu_rc_sq,
             "reduction": cfg.coupling_reduction, "eta": cfg.eta}
    pulls = {k: (fit[k] - v) / fit.sigma[k] for k, v in truth.items()}
    _detail(record_property, ", ".join(f"{k} {fit[k]:.3f} ({p:+.2f} sigma)" for k, p in pulls.items()))
    # 95 % intervals
    assert all(abs(p) <= 2.0 for p in pulls.values())


@pytest.mark.criterion(12, "conversions, Bernoulli interval, atom aggregation, g2 invariants")
def test_c12_statistics(cfg, record_property):
    worst = 0.0
    for n_mean in (0.1, 0.5, 1.0, 2.0, 5.0):
        for p_s in (0.05, 0.3, 0.52, 0.9):
            p_t = transfer_from_storage(p_s, n_mean)
            worst = max(worst, abs(storage_from_transfer(p_t, n_mean) / p_s - 1))
            p_h1 = 0.11 * p_s
            back = single_photon_heralding(herald_from_single_photon(p_h1, p_t, n_mean), p_t, n_mean)
            worst = max(worst, abs(back / p_h1 - 1))
    ci = bernoulli_ci(94, 6)
    per_atom = [(0.95, 0.02, 40), (0.90, 0.03, 25), (0.97, 0.01, 35)]
    m = (0.95 * 40 + 0.90 * 25 + 0.97 * 35) / 100
    v = (40 * (0.02 ** 2 + (0.95 - m) ** 2) + 25 * (0.03 ** 2 + (0.90 - m) ** 2)
         + 35 * (0.01 ** 2 + (0.97 - m) ** 2)) / 100
    agg = aggregate_atoms(per_atom)
    ds = run_trials(cfg, TrialParams(), 30_000, 12)
    gh = g2(ds, "herald", max_lag=1e-6, bin_width=20e-9)
    gh0 = float(gh.estimate[np.argmin(np.abs(gh.x))]) if np.any(gh.x == 0) else 0.0
    gp = g2(poisson_stream_dataset(100_000, 0.5, 1e-6, 12), None, max_lag=0.5e-6, bin_width=50e-9)
    i0 = int(np.argmin(np.abs(gp.x)))
    _detail(record_property, f"conversion rel error {worst:.1e}, herald g2(0) {gh0:.3f}, "
            f"Poisson g2(0) {gp.estimate[i0]:.3f} +/- {gp.sigma[i0]:.3f}")
    assert worst <= 1e-12
    assert ci.p == 0.94 and ci.sigma == pytest.approx(math.sqrt(0.94 * 0.06 / 100), rel=1e-12)
    assert agg == pytest.approx((m, math.sqrt(v)), rel=1e-12)
    assert gh0 < 0.2
    assert abs(gp.estimate[i0] - 1.0) <= 3 * gp.sigma[i0]


@pytest.mark.criterion(13, "scenario output byte-reproducible from (config, seed)")
def test_c13_determinism(tmp_path, capsys, record_property):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["spectra", "--seed", "13", "--out", str(a)]) == 0
    assert main(["spectra", "--seed", "13", "--out", str(b)]) == 0
    names = sorted(os.listdir(a))
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    capsys.readouterr()
    _detail(record_property, f"{len(names)} files compared, {len(mismatch) + len(errors)} differ")
    assert sorted(os.listdir(b)) == names
    assert not mismatch and not errors
