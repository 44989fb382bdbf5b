"""Fabry-Perot cavity optics: decay rates, Gaussian mode size, birefringence
and transmission spectra with and without a coupled atom.

All functions are pure.  Rates are angular (rad/s), frequencies in Hz,
lengths in metres.
"""

from dataclasses import dataclass
import csv
import math

import numpy as np
from scipy.optimize import minimize_scalar

from .constants import CONSTANTS, TWO_PI


def decay_rates(length, finesse, t_out, c=CONSTANTS.speed_of_light):
    """Field decay rate, outcoupler share of it, and free spectral range.

    Parameters
    ----------
    length : float
        Mirror separation in metres.
    finesse : float
        Cavity finesse.
    t_out : float
        Power transmission of the outcoupling mirror (not ppm).

    Returns
    -------
    kappa, kappa_out : float
        Total and outcoupler field decay rates in rad/s.
    fsr : float
        Free spectral range in Hz.
    """
    if not (length > 0 and finesse > 0 and t_out > 0):
        raise ValueError("length, finesse and t_out must be positive")
    fsr = c / (2.0 * length)
    kappa = math.pi * c / (2.0 * length * finesse)
    round_trip_loss = TWO_PI / finesse
    if t_out > round_trip_loss:
        raise ValueError("outcoupler transmission exceeds total round-trip loss")
    kappa_out = kappa * t_out / round_trip_loss
    return kappa, kappa_out, fsr


def resonator_waist(roc1, roc2, length, wavelength):
    """Waist radius and its distance from mirror 1 for a two-mirror resonator."""
    if min(roc1, roc2, length, wavelength) <= 0:
        raise ValueError("radii, length and wavelength must be positive")
    g1 = 1.0 - length / roc1
    g2 = 1.0 - length / roc2
    gg = g1 * g2
    if not 0.0 < gg < 1.0:
        raise ValueError(f"unstable resonator (g1*g2 = {gg:.4f})")
    denom = g1 + g2 - 2.0 * gg
    w0_sq = (wavelength * length / math.pi) * math.sqrt(gg * (1.0 - gg) / denom ** 2)
    z1 = length * g2 * (1.0 - g1) / denom
    return math.sqrt(w0_sq), z1


def beam_radius(w0, z, wavelength):
    """Gaussian beam radius at distance ``z`` from a waist ``w0``."""
    z_r = math.pi * w0 ** 2 / wavelength
    return w0 * math.sqrt(1.0 + (z / z_r) ** 2)


def mode_radius_at_centre(roc1, roc2, length, wavelength=CONSTANTS.rb87_d2_wavelength):
    """1/e^2 intensity radius of the TEM00 mode halfway between the mirrors."""
    w0, z1 = resonator_waist(roc1, roc2, length, wavelength)
    return beam_radius(w0, 0.5 * length - z1, wavelength)


def birefringence(mirror_rocs, wavelength, fsr):
    """Round-trip birefringent phase of elliptical mirrors and the mode splitting.

    ``mirror_rocs`` is a sequence of ``(R_x, R_y)`` pairs, one per mirror.
    Uses the small-phase relation, valid for mrad-scale phases.
    """
    total = 0.0
    for rx, ry in mirror_rocs:
        if rx <= 0 or ry <= 0:
            raise ValueError("radii of curvature must be positive")
        total += 1.0 / rx - 1.0 / ry
    phase = wavelength / TWO_PI * total
    return phase, phase * fsr / TWO_PI


def expected_coupling(mode_radius, length, wavelength=CONSTANTS.rb87_d2_wavelength,
                      relative_dipole=1.0, gamma=CONSTANTS.gamma_atom,
                      c=CONSTANTS.speed_of_light):
    """Atom-cavity coupling g (rad/s) at an antinode on the mode axis.

    ``mode_radius`` may be a scalar or an ``(w_x, w_y)`` pair for an
    elliptical mode.  ``gamma`` is the amplitude decay rate, so the
    spontaneous emission rate entering the dipole moment is ``2*gamma``.
    """
    if np.ndim(mode_radius):
        wx, wy = mode_radius
        area = wx * wy
    else:
        area = mode_radius ** 2
    if area <= 0 or length <= 0 or wavelength <= 0:
        raise ValueError("mode radius, length and wavelength must be positive")
    if relative_dipole < 0:
        raise ValueError("relative dipole must be non-negative")
    g_cyc = math.sqrt(3.0 * c * wavelength ** 2 * (2.0 * gamma) / (2.0 * math.pi ** 2 * area * length))
    return relative_dipole * g_cyc


@dataclass(frozen=True)
class TransmissionSpectrum:
    detunings: np.ndarray  # Hz
    transmission: np.ndarray
    model_tag: str

    def __post_init__(self):
        d = np.asarray(self.detunings, dtype=float)
        if d.size == 0:
            raise ValueError("empty detuning grid")
        if np.any(np.diff(d) <= 0):
            raise ValueError("detunings must be strictly increasing")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["detuning_MHz", "transmission"])
            for x, y in zip(self.detunings, self.transmission):
                w.writerow([f"{x / 1e6:.9g}", f"{y:.9g}"])


def _raw_transmission(model_tag, det, kappa, g, gamma, atom_detuning, cavity_detuning):
    det = np.asarray(det, dtype=float)
    d_c = TWO_PI * (det - cavity_detuning)
    if model_tag == "lorentzian":
        return kappa ** 2 / (kappa ** 2 + d_c ** 2)
    if model_tag == "normal_mode":
        d_a = TWO_PI * (det - atom_detuning)
        atom = gamma + 1j * d_a
        t = kappa * atom / ((kappa + 1j * d_c) * atom + g ** 2)
        return np.abs(t) ** 2
    raise ValueError(f"unknown model tag {model_tag!r}")


def _peak(model_tag, kappa, g, gamma, atom_detuning, cavity_detuning):
    if model_tag == "lorentzian":
        return 1.0
    # analytic maximum, independent of the caller's grid
    def f(x):
        return -_raw_transmission(model_tag, x, kappa, g, gamma, atom_detuning, cavity_detuning)
    span = 3.0 * (g + kappa + gamma) / TWO_PI + abs(atom_detuning) + abs(cavity_detuning)
    centre = 0.5 * (atom_detuning + cavity_detuning)
    coarse = np.linspace(centre - span, centre + span, 4001)
    vals = -f(coarse)
    i = int(np.argmax(vals))
    step = coarse[1] - coarse[0]
    res = minimize_scalar(f, bounds=(coarse[i] - step, coarse[i] + step), method="bounded",
                          options={"xatol": 1e-6 * step})
    return max(vals[i], -res.fun)


def transmission_spectrum(model_tag, kappa, detunings, g=0.0, gamma=CONSTANTS.gamma_atom,
                          atom_detuning=0.0, cavity_detuning=0.0):
    """Peak-normalised cavity transmission on a grid of probe detunings (Hz).

    ``lorentzian`` ignores ``g`` and the atom; ``normal_mode`` is the weak-drive
    steady-state transmission of a cavity coupled to a two-level atom.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if g < 0:
        raise ValueError("g must be non-negative")
    det = np.asarray(detunings, dtype=float)
    if det.size == 0:
        raise ValueError("empty detuning grid")
    raw = _raw_transmission(model_tag, det, kappa, g, gamma, atom_detuning, cavity_detuning)
    peak = _peak(model_tag, kappa, g, gamma, atom_detuning, cavity_detuning)
    return TransmissionSpectrum(det, np.clip(raw / peak, 0.0, 1.0), model_tag)
