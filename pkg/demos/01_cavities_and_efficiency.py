# Cavities, coupling and the closed-form storage efficiency.
#
# Starts from mirror data (length, finesse, radii of curvature) and ends at
# the single-photon storage and heralding efficiency versus the detuning of
# the herald cavity.  Everything here is analytic and runs instantly.

import numpy as np

from heraldmem import reference_config
from heraldmem.cavity import birefringence, mode_radius_at_centre
from heraldmem.constants import TWO_PI
from heraldmem.storage import efficiency_curves, loss_fractions, purcell_rate

cfg = reference_config()
q, h = cfg.qubit_cavity, cfg.herald_cavity

# --- field decay rates from finesse and length
print("kappa_Q/2pi = %.2f MHz  (outcoupler %.2f MHz)" % (q.kappa / TWO_PI / 1e6, q.kappa_out / TWO_PI / 1e6))
print("kappa_H/2pi = %.2f MHz  (outcoupler %.2f MHz)" % (h.kappa / TWO_PI / 1e6, h.kappa_out / TWO_PI / 1e6))

# --- mode radius in the middle of each cavity; the herald mirrors are elliptic
lam = cfg.constants.rb87_d2_wavelength
print("qubit mode radius %.2f um" % (mode_radius_at_centre(q.roc_outcoupler[0], q.roc_backmirror[0], q.length, lam) * 1e6))
for axis in (0, 1):
    w = mode_radius_at_centre(h.roc_outcoupler[axis], h.roc_backmirror[axis], h.length, lam)
    print("herald mode radius, axis %d: %.2f um" % (axis, w * 1e6))
phase, split = birefringence([h.roc_outcoupler, h.roc_backmirror], lam, h.fsr)
print("herald birefringence: %.2f mrad per round trip, %.0f MHz splitting" % (abs(phase) * 1e3, abs(split) / 1e6))

# --- where an incoming photon goes at zero detuning
gp = purcell_rate(cfg.g_h, cfg.kappa_h, 0.0)
lf = loss_fractions(cfg, gp)
print("\nPurcell rate into the herald mode: %.1f x gamma" % (gp / cfg.gamma))
print("reflected %.3f, lost in cavity %.3f, scattered by the atom %.3f"
      % (lf.p_reflected, lf.p_cavity_loss, lf.p_atom_scattered))

# --- detuning scan of the herald cavity
det = np.linspace(-2, 2, 9) * cfg.kappa_h / TWO_PI
ps, ph = efficiency_curves(cfg, det)
print("\n detuning/MHz    p_s     p_H1")
for d, a, b in zip(det, ps.estimate, ph.estimate):
    print("%12.1f  %6.3f  %6.3f" % (d / 1e6, a, b))
