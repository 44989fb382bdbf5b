import math

import numpy as np
import pytest
from scipy.optimize import approx_fprime

from heraldmem.config import AXIAL_INPUTS
from heraldmem.stats import CountTable
from heraldmem.tomography import (PROJ, DensityMatrix, ProcessMatrix, TomographyError,
                                  _choi_from_params, _ket, _linear_choi, _process_gradient,
                                  average_from_process, channel_probabilities,
                                  depolarizing_channel, fidelities, from_json,
                                  identity_channel, mc_uncertainty, poincare_csv,
                                  process_fidelity_between, process_from_average,
                                  process_mle, random_channel, sample_counts, state_mle,
                                  state_probabilities, to_json)


def _exact_table(process, shots=1.0):
    return CountTable(shots * channel_probabilities(process))


# ---- channels and fidelities ---------------------------------------------

def test_identity_channel_is_perfect():
    f = fidelities(identity_channel())
    assert f["F_p"] == pytest.approx(1.0, abs=1e-12)
    assert all(v == pytest.approx(1.0, abs=1e-12) for v in f["F_s"].values())


@pytest.mark.parametrize("p", [0.0, 0.1, 0.5, 1.0])
def test_depolarizing_fidelities(p):
    # closed forms: F_p = 1 - 3p/4, every axial state fidelity 1 - p/2
    f = fidelities(depolarizing_channel(p))
    assert f["F_p"] == pytest.approx(1 - 3 * p / 4, abs=1e-12)
    assert f["F_s_avg"] == pytest.approx(1 - p / 2, abs=1e-12)


def test_average_process_identity_random_channels():
    rng = np.random.default_rng(7)
    for _ in range(50):
        assert abs(fidelities(random_channel(rng))["identity_residual"]) < 1e-6


def test_identity_maps_reference_values():
    assert average_from_process(0.922) == pytest.approx(0.948, abs=5e-4)
    assert process_from_average(average_from_process(0.3)) == pytest.approx(0.3)


def test_choi_fidelity_with_identity_is_chi_ii():
    ch = random_channel(3)
    assert process_fidelity_between(ch, identity_channel()) == pytest.approx(
        ch.process_fidelity, abs=1e-8)


def test_process_matrix_validation():
    with pytest.raises(ValueError):
        ProcessMatrix(np.eye(3))
    with pytest.raises(ValueError):
        ProcessMatrix(np.diag([1.0, 0.0, 0.0, 0.0]) * 2)   # not trace preserving
    with pytest.raises(ValueError):
        ProcessMatrix(np.diag([1.5, -0.5, 0.0, 0.0]))
    with pytest.raises(ValueError):
        depolarizing_channel(1.5)


def test_density_matrix_stokes_and_validation():
    assert DensityMatrix.pure("R").stokes() == pytest.approx((0, 0, 1), abs=1e-12)
    assert DensityMatrix.pure("H").stokes() == pytest.approx((1, 0, 0), abs=1e-12)
    assert DensityMatrix.pure("D").stokes() == pytest.approx((0, 1, 0), abs=1e-12)
    assert DensityMatrix.pure("R").trace_distance(DensityMatrix.pure("L")) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([1.2, -0.2]))


# ---- reconstruction --------------------------------------------------------

def test_linear_inversion_exact_from_probabilities():
    ch = random_channel(11)
    assert np.allclose(_linear_choi(_exact_table(ch)), ch.choi, atol=1e-12)


def test_process_mle_recovers_exact_channel():
    ch = depolarizing_channel(0.2)
    est = process_mle(_exact_table(ch, 1000.0))
    assert est.process_fidelity == pytest.approx(ch.process_fidelity, abs=1e-4)


def test_process_mle_from_sampled_counts():
    rng = np.random.default_rng(21)
    for k in range(3):
        ch = random_channel(rng)
        shots = 100_000 // 18
        table = CountTable(sample_counts(channel_probabilities(ch), shots, rng))
        assert abs(process_mle(table).process_fidelity - ch.process_fidelity) < 0.01


def test_state_mle_pure_and_mixed():
    for lab in AXIAL_INPUTS:
        rho = state_mle(1000 * state_probabilities(DensityMatrix.pure(lab)))
        assert rho.fidelity(lab) == pytest.approx(1.0, abs=1e-4)
    mixed = state_mle(500 * np.ones((3, 2)))
    assert np.allclose(mixed.matrix, 0.5 * np.eye(2), atol=1e-6)


def test_process_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    N = channel_probabilities(random_channel(rng)) * 100 + 1
    w = N / N.sum()
    Mf = np.array([np.kron(np.outer(_ket(lab), _ket(lab).conj()).T, PROJ[b, o])
                   for lab in AXIAL_INPUTS for b in range(3) for o in range(2)])
    wf = w.reshape(-1)

    def nll(x):
        p = np.einsum("kxy,yx->k", Mf, _choi_from_params(x)).real
        return -np.sum(wf * np.log(p))

    x = rng.standard_normal(20)
    num = approx_fprime(x, nll, 1e-7)
    assert np.allclose(_process_gradient(x, Mf, wf), num, atol=1e-5)


def test_reconstruction_errors():
    with pytest.raises(TomographyError):
        state_mle(np.zeros((3, 2)))
    with pytest.raises(TomographyError):
        state_mle(np.ones((2, 2)))
    with pytest.raises(TomographyError):
        process_mle(CountTable(np.ones((2, 3, 2)), ("R", "L")))
    c = np.ones((6, 3, 2))
    c[2, 1] = 0
    with pytest.raises(TomographyError):
        process_mle(CountTable(c))


def test_mc_uncertainty_scales_with_shots():
    ch = depolarizing_channel(0.1)
    fp = lambda t: process_mle(t).process_fidelity
    s1, f1 = mc_uncertainty(_exact_table(ch, 400.0), fp, k_samples=100, seed=1)
    s2, f2 = mc_uncertainty(_exact_table(ch, 1600.0), fp, k_samples=100, seed=1)
    assert f1 == f2 == 0
    assert s2 == pytest.approx(s1 / 2, rel=0.35)
    with pytest.raises(ValueError):
        mc_uncertainty(_exact_table(ch, 10.0), fp, k_samples=10)


def test_json_and_csv_export(tmp_path):
    ch = random_channel(2)
    back = from_json(to_json(ch, tmp_path / "chi.json"))
    assert np.allclose(back.chi, ch.chi)
    rho = DensityMatrix.pure("D")
    assert np.allclose(from_json(to_json(rho)).matrix, rho.matrix)
    text = poincare_csv({"D": rho})
    assert text.splitlines()[0] == "label,S1,S2,S3"
    assert text.splitlines()[1].startswith("D,")
    assert math.isclose(float(text.splitlines()[1].split(",")[2]), 1.0)
