import math

import numpy as np
import pytest

from heraldmem.dynamics import TrialParams, run_trials
from heraldmem.stats import (ClickStream, CountTable, EstimationError, aggregate_atoms,
                             bernoulli_ci, binomial_fraction, condition_on_herald,
                             count_fidelities, estimate_probabilities, expected_fidelities, g2,
                             histogram, truncation_sweep)


def test_bernoulli_ci_closed_form():
    ci = bernoulli_ci(94, 6)
    assert ci.p == 0.94
    assert ci.sigma == pytest.approx(math.sqrt(0.94 * 0.06 / 100), rel=1e-15)
    assert round(ci.sigma, 4) == 0.0237
    assert not ci.degenerate
    assert bernoulli_ci(10, 0).degenerate
    with pytest.raises(EstimationError):
        bernoulli_ci(0, 0)
    with pytest.raises(ValueError):
        bernoulli_ci(-1, 3)


def test_binomial_fraction_zero_successes():
    p, s = binomial_fraction(0, 100)
    assert p == 0.0
    assert s == pytest.approx(1 - 0.32 ** (1 / 100))


def test_aggregate_closed_form_is_total_variance():
    per_atom = [(0.9, 0.01, 100), (0.8, 0.02, 300)]
    m, s = aggregate_atoms(per_atom)
    mean = (0.9 * 100 + 0.8 * 300) / 400
    var = (100 * (0.01 ** 2 + (0.9 - mean) ** 2) + 300 * (0.02 ** 2 + (0.8 - mean) ** 2)) / 400
    assert m == pytest.approx(mean, rel=1e-14)
    assert s == pytest.approx(math.sqrt(var), rel=1e-14)


def test_aggregate_monte_carlo_agrees_with_closed_form():
    per_atom = [(0.5, 0.05, 20000), (0.6, 0.03, 40000), (0.55, 0.1, 10000)]
    mc = aggregate_atoms(per_atom, "monte_carlo", rng=7)
    cf = aggregate_atoms(per_atom)
    n = 70000
    assert mc[0] == pytest.approx(cf[0], abs=4 * cf[1] / math.sqrt(n))
    assert mc[1] == pytest.approx(cf[1], rel=0.02)


def test_aggregate_single_atom_and_errors():
    assert aggregate_atoms([(0.3, 0.02, 5)]) == pytest.approx((0.3, 0.02))
    with pytest.raises(EstimationError):
        aggregate_atoms([(0.3, 0.02, 0)])
    with pytest.raises(ValueError):
        aggregate_atoms([(0.3, 0.02, 1)], mode="bogus")


def test_g2_single_click_per_trial_is_zero(rng):
    n = 5000
    s = ClickStream(np.arange(n), rng.uniform(0, 1e-6, n), n)
    g = g2(s, None, max_lag=0.5e-6, bin_width=50e-9)
    assert np.all(g.estimate == 0.0)


def test_g2_poisson_stream_is_one(rng):
    n, window = 200_000, 1e-6
    k = rng.poisson(0.5, n)
    ids = np.repeat(np.arange(n), k)
    s = ClickStream(ids, rng.uniform(0, window, ids.size), n)
    g = g2(s, None, max_lag=0.5e-6, bin_width=50e-9)
    z = (g.estimate - 1.0) / g.sigma
    assert np.all(np.abs(z) < 5)
    i0 = np.argmin(np.abs(g.x))
    assert g.estimate[i0] == pytest.approx(1.0, abs=3 * g.sigma[i0])


def test_g2_pairs_in_one_bin(rng):
    # trials carry either nothing or two clicks in the same bin: g2(0) = B / (2 p)
    n, p, B, w = 200_000, 0.1, 20, 50e-9
    has = rng.random(n) < p
    ids = np.repeat(np.nonzero(has)[0], 2)
    t = np.repeat(rng.integers(0, B, has.sum()) * w, 2)
    g = g2(ClickStream(ids, t, n), None, max_lag=w, bin_width=w)
    assert g.estimate[np.argmin(np.abs(g.x))] == pytest.approx(B / (2 * p), rel=0.05)


def test_g2_errors():
    with pytest.raises(EstimationError):
        g2(ClickStream([0], [0.0], 10), None)
    with pytest.raises(ValueError):
        g2(ClickStream([0, 1], [0.0, 1e-9], 10), None, bin_width=0.0)


def test_histogram_counts_every_click(rng):
    n = 1000
    t = rng.uniform(0, 1e-6, 300)
    h = histogram(ClickStream(np.arange(300), t, n), None, bin_width=1e-7)
    assert h.estimate.sum() * n == pytest.approx(300)
    assert h.sigma == pytest.approx(np.sqrt(h.estimate * n) / n)


def test_count_fidelities_on_perfect_table():
    c = np.zeros((6, 3, 2))
    for i, lab in enumerate("RLHVDA"):
        b = {"R": 0, "L": 0, "H": 1, "V": 1, "D": 2, "A": 2}[lab]
        c[i, b, "RLHVDA".index(lab) % 2] = 50
        c[i, (b + 1) % 3] = 25
        c[i, (b + 2) % 3] = 25
    ps, ss, avg, sig = count_fidelities(CountTable(c))
    assert np.all(ps == 1.0) and avg == 1.0


def test_count_table_validation():
    with pytest.raises(ValueError):
        CountTable(np.zeros((6, 3, 3)))
    with pytest.raises(ValueError):
        CountTable(-np.ones((6, 3, 2)))


@pytest.fixture(scope="module")
def small_run(cfg):
    return run_trials(cfg, TrialParams(), 3000, 11)


def test_condition_on_herald(small_run):
    sub = condition_on_herald(small_run)
    assert np.all(sub["herald_click"])
    assert sub.meta["retained_fraction"] == pytest.approx(np.mean(small_run["herald_click"]))


def test_count_table_from_dataset(small_run):
    t = CountTable.from_dataset(small_run)
    assert t.total == np.count_nonzero(small_run["readout_click"])
    early = CountTable.from_dataset(small_run, max_time=200e-9)
    assert early.total <= t.total
    # the cut must not alter the dataset
    assert CountTable.from_dataset(small_run).total == t.total


def test_expected_fidelities_nan_without_photon(small_run):
    f = expected_fidelities(small_run)
    assert np.all(np.isnan(f[~small_run["readout_emitted"]]))
    ok = f[small_run["readout_emitted"]]
    assert np.all((ok >= -1e-12) & (ok <= 1 + 1e-12))


def test_truncation_sweep_patterns(small_run):
    cuts = np.linspace(100e-9, 700e-9, 7)
    f, e = truncation_sweep(small_run, cuts, estimator="expected", stream="readout_emitted")
    assert np.all(np.diff(e.estimate) >= 0)
    with pytest.raises(ValueError):
        truncation_sweep(small_run, [-1.0])
    with pytest.raises(ValueError):
        truncation_sweep(small_run, cuts, estimator="counts", stream="readout_emitted")


def test_estimate_probabilities_saturated_reference(cfg):
    from heraldmem.config import write_pulse
    weak = TrialParams(read=None, herald_detection="lumped")
    ds = run_trials(cfg, weak, 20000, 3)
    ref = run_trials(cfg, weak.with_(write=write_pulse(mean_photon_number=20.0)), 5000, 3,
                     first_trial=20000)
    est = estimate_probabilities(ds, ref)
    # single-photon storage efficiency inverts the Poissonian conversion
    assert est.p_s == pytest.approx(-math.log1p(-est.p_t_nbar) / 0.5, rel=1e-12)
    assert 0 < est.p_h_nbar < est.p_t_nbar < 1
    assert math.isnan(est.p_t_readout)
