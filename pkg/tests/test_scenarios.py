import math

import numpy as np
import pytest

from heraldmem.scenarios import (SCENARIOS, Bundle, Comparison, _cut_change,
                                 poisson_stream_dataset, run_scenario, synthetic_detuning_data)


def test_spectra_scenario_passes(cfg):
    b = run_scenario("spectra", cfg, seed=2)
    assert len(b.comparisons) == 9
    assert b.n_failed == 0


def test_run_scenario_rejects_bad_arguments(cfg):
    with pytest.raises(ValueError):
        run_scenario("bogus", cfg)
    with pytest.raises(ValueError):
        run_scenario("spectra", cfg, n_trials=0)
    assert "truncation" in SCENARIOS


@pytest.mark.parametrize("mode,computed,target,tol,ok", [
    ("abs", 1.05, 1.0, 0.1, True), ("abs", 1.2, 1.0, 0.1, False),
    ("rel", 105.0, 100.0, 0.05, True), ("rel", 106.0, 100.0, 0.05, False),
    ("le", 0.1, 0.2, 0.0, True), ("ge", 0.1, 0.2, 0.0, False),
    ("range", 2.0, (1.5, 2.5), 0.0, True), ("range", 2.6, (1.5, 2.5), 0.0, False),
    ("abs", math.nan, 1.0, 1.0, False), ("abs", None, 1.0, 1.0, False),
])
def test_comparison_modes(mode, computed, target, tol, ok):
    assert Comparison("x", computed, target, tol, mode).passed is ok


def test_bundle_counts_failures():
    b = Bundle("t", 0, 1)
    b.check("a", 1.0, 1.0, 0.1)
    b.check("b", 2.0, 1.0, 0.1)
    assert b.n_failed == 1


def test_cut_change_matches_direct_means():
    rng = np.random.default_rng(1)
    f = rng.random(200)
    t = rng.random(200)
    d, s = _cut_change(f, t, 0.4, 0.9)
    assert d == pytest.approx(f[t <= 0.9].mean() - f[t <= 0.4].mean(), abs=1e-12)
    assert s > 0
    assert _cut_change(f, t, 0.0, 0.5) == (0.0, 0.0)   # no photons before the first cut


def test_poisson_stream_is_reproducible():
    a = poisson_stream_dataset(1000, 0.5, 1e-6, 3)
    b = poisson_stream_dataset(1000, 0.5, 1e-6, 3)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.trial_ids, b.trial_ids)
    assert len(a) == pytest.approx(500, abs=4 * math.sqrt(500))


def test_synthetic_detuning_data_shape(cfg):
    s, h = synthetic_detuning_data(cfg, 0)
    assert len(s) == len(h) == 9
    assert np.any(s.x == 0.0)
    assert np.all(s.sigma == 0.03) and np.all(h.sigma == 0.01)
