# Storage in a guiding field.
#
# The stored Zeeman qubit precesses at twice the Larmor frequency, so a
# linear input comes back rotated and its fidelity oscillates while a
# circular input stays put.  Quasi-static field noise dephases the
# oscillation.

import numpy as np

from heraldmem import reference_config
from heraldmem.dynamics import evolve_storage
from heraldmem.fitting import fit_coherence
from heraldmem.results import ScanResult

cfg = reference_config()
nu = 2 * cfg.constants.larmor_frequency(cfg.b_field)
print("2 nu_L = %.2f kHz at %.1f mG" % (nu / 1e3, cfg.b_field * 1e7))

R = np.array([0, 0, 0, 1, 0], dtype=complex)
L = np.array([0, 1, 0, 0, 0], dtype=complex)
H = (R + L) / np.sqrt(2)


def fidelity(state, ref, t):
    out = evolve_storage(state[None, :], cfg, np.array([t]))[0]
    return abs(np.vdot(ref, out)) ** 2


times = np.linspace(0, 60e-6, 31)
fh = np.array([fidelity(H, H, t) for t in times])
fr = np.array([fidelity(R, R, t) for t in times])
print("circular input: min fidelity %.6f" % fr.min())

# fit the oscillation; tiny error bars because there is no sampling noise here
fit = fit_coherence(ScanResult(times, fh, np.full(times.size, 1e-3)))
print("fitted frequency %.2f kHz, visibility %.3f" % (fit["freq"] / 1e3, fit["visibility"]))
