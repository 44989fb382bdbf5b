"""Closed-form model of vacuum-stimulated heralded storage.

A photon hitting the qubit cavity is either reflected (``P_R``), lost
inside the cavity (``P_C``) or scattered by the atom (``P_A``).  The atom
decay is Purcell-enhanced by the herald cavity, which sets both the
branching into the F=2 manifold and the share of herald photons.
"""

from dataclasses import dataclass
import math

import numpy as np

from .constants import TWO_PI
from .results import ScanResult


@dataclass(frozen=True)
class LossFractions:
    p_reflected: float
    p_cavity_loss: float
    p_atom_scattered: float

    def __post_init__(self):
        tol = 1e-12
        for name in ("p_reflected", "p_cavity_loss", "p_atom_scattered"):
            v = getattr(self, name)
            if not -tol <= v <= 1 + tol:
                raise ValueError(f"{name} = {v} outside [0, 1]")


def purcell_rate(g_h, kappa_h, detuning):
    """Vacuum-induced decay rate into the herald cavity (rad/s).

    ``detuning`` is the atom-cavity detuning in Hz (array-like allowed).
    """
    if kappa_h <= 0:
        raise ValueError("kappa_h must be positive")
    d = TWO_PI * np.asarray(detuning, dtype=float)
    out = g_h ** 2 * kappa_h / (kappa_h ** 2 + d ** 2)
    return out if np.ndim(out) else float(out)


def branching_to_f2(gamma, gamma_p):
    """Probability that the excited atom ends in F=2: (gamma/2 + gamma_P)/(gamma + gamma_P)."""
    if gamma <= 0 or np.any(np.asarray(gamma_p) < 0):
        raise ValueError("rates must be non-negative (gamma > 0)")
    if np.isinf(gamma_p):
        return 1.0
    return (0.5 * gamma + gamma_p) / (gamma + gamma_p)


def impedance_factor(g_q, kappa_q, kappa_1q, gamma_tilde):
    """epsilon = 2*gt*sqrt(kq*k1q) / (g^2 + kq*gt)."""
    return 2.0 * gamma_tilde * math.sqrt(kappa_q * kappa_1q) / (g_q ** 2 + kappa_q * gamma_tilde)


def loss_fractions(config, gamma_p):
    """Reflection, cavity-loss and atom-scattering fractions at a Purcell rate."""
    kq, k1 = config.kappa_q, config.kappa_1q
    if k1 > kq:
        raise ValueError("outcoupler rate exceeds total cavity decay rate")
    gt = config.gamma + gamma_p
    eps = impedance_factor(config.g_q, kq, k1, gt)
    mu_fc = math.sqrt(config.mu_fc_sq)
    mu_rc = math.sqrt(config.mu_rc_sq)
    p_c = (kq - k1) / kq * config.mu_fc_sq * eps ** 2
    p_r = (1.0 - config.mu_rc_sq) + abs(mu_rc - mu_fc * math.sqrt(k1 / kq) * eps) ** 2
    p_a = 1.0 - p_r - p_c
    return LossFractions(p_r, p_c, max(p_a, 0.0) if p_a > -1e-12 else p_a)


def storage_efficiency(config, detuning):
    """Single-photon storage efficiency p_s at one herald-cavity detuning (Hz)."""
    gp = purcell_rate(config.g_h, config.kappa_h, detuning)
    return loss_fractions(config, gp).p_atom_scattered * branching_to_f2(config.gamma, gp)


def heralding_efficiency(config, detuning, eta=None):
    """Single-photon heralding efficiency p_H1 (only Purcell-channel photons count)."""
    gp = purcell_rate(config.g_h, config.kappa_h, detuning)
    eta = config.eta if eta is None else eta
    return loss_fractions(config, gp).p_atom_scattered * gp / (config.gamma + gp) * eta


def efficiency_curves(config, detunings):
    """Storage and heralding efficiency versus herald-cavity detuning.

    Returns a pair of :class:`ScanResult` with zero model uncertainty.
    """
    det = np.atleast_1d(np.asarray(detunings, dtype=float))
    if det.size == 0:
        raise ValueError("empty detuning grid")
    ps = np.array([storage_efficiency(config, d) for d in det])
    ph = np.array([heralding_efficiency(config, d) for d in det])
    zeros = np.zeros_like(det)
    return (ScanResult(det, ps, zeros, label="storage_efficiency", x_name="detuning", x_unit="Hz"),
            ScanResult(det, ph, zeros.copy(), label="heralding_efficiency", x_name="detuning", x_unit="Hz"))


# --------------------------------------------------------------------------
# coherent pulse <-> single photon


class ConversionError(ValueError):
    """Transfer probability of one makes the logarithmic inversion singular."""


def _check_prob(p, name):
    if not 0.0 <= p < 1.0:
        if p == 1.0:
            raise ConversionError(f"{name} = 1 is unconvertible")
        raise ValueError(f"{name} = {p} outside [0, 1)")


def transfer_from_storage(p_s, n_mean):
    """p_t = 1 - exp(-n * p_s) for Poissonian photon number."""
    if n_mean <= 0:
        raise ValueError("mean photon number must be positive")
    if not 0.0 <= p_s <= 1.0:
        raise ValueError("p_s outside [0, 1]")
    return -math.expm1(-n_mean * p_s)


def storage_from_transfer(p_t, n_mean):
    """p_s = -ln(1 - p_t) / n."""
    if n_mean <= 0:
        raise ValueError("mean photon number must be positive")
    _check_prob(p_t, "p_t")
    return -math.log1p(-p_t) / n_mean


def single_photon_heralding(p_h_n, p_t, n_mean):
    """p_H1 = -(p_H,n / n) * ln(1 - p_t) / p_t, with the p_t -> 0 limit p_H,n / n."""
    if n_mean <= 0:
        raise ValueError("mean photon number must be positive")
    _check_prob(p_t, "p_t")
    if p_t == 0.0:
        return p_h_n / n_mean
    return -(p_h_n / n_mean) * math.log1p(-p_t) / p_t


def herald_from_single_photon(p_h1, p_t, n_mean):
    """Inverse of :func:`single_photon_heralding`: p_H,n from p_H1 and p_t."""
    _check_prob(p_t, "p_t")
    if p_t == 0.0:
        return p_h1 * n_mean
    return -p_h1 * n_mean * p_t / math.log1p(-p_t)


def coherent_conversions(n_mean, p_t_nbar=None, p_s=None, p_h_nbar=None):
    """Convert between coherent-pulse and single-photon probabilities.

    Exactly one of ``p_t_nbar`` or ``p_s`` must be given; ``p_h_nbar``
    additionally requires ``p_t_nbar`` and yields ``p_h1``.  Returns a dict
    with every quantity that can be derived.
    """
    if (p_t_nbar is None) == (p_s is None):
        raise ValueError("give exactly one of p_t_nbar and p_s")
    out = {"n_mean": n_mean}
    if p_s is not None:
        if p_h_nbar is not None:
            raise ValueError("p_h_nbar needs p_t_nbar")
        out["p_s"] = p_s
        out["p_t_nbar"] = transfer_from_storage(p_s, n_mean)
        return out
    out["p_t_nbar"] = p_t_nbar
    out["p_s"] = storage_from_transfer(p_t_nbar, n_mean)
    if p_h_nbar is not None:
        out["p_h_nbar"] = p_h_nbar
        out["p_h1"] = single_photon_heralding(p_h_nbar, p_t_nbar, n_mean)
    return out
