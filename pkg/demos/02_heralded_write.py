# Heralded write: trajectories versus the closed form.
#
# Single photons are sent into the qubit cavity.  A herald photon leaves
# the crossed cavity whenever the Raman transfer to F=2 went through the
# cavity mode; the detection chain then thins it.

import numpy as np

from heraldmem import reference_config
from heraldmem.config import PolarizationState, write_pulse
from heraldmem.dynamics import TrialParams, run_trials
from heraldmem.dynamics.detection import downstream
from heraldmem.dynamics.write import WriteSolver
from heraldmem.stats import binomial_fraction, histogram
from heraldmem.storage import heralding_efficiency, storage_efficiency

cfg = reference_config()

# deterministic amplitudes first: one solve per initial state and polarisation
amp = WriteSolver(cfg, write_pulse()).amplitudes(PolarizationState.named("H").vector)
print("transfer per photon %.4f   (closed form %.4f)" % (amp.transfer_probability(), storage_efficiency(cfg, 0.0)))
print("probability bookkeeping closes to %.1e" % np.max(np.abs(amp.budget_residual())))

# --- Monte Carlo trials, write only
# "lumped" detection uses the single overall efficiency eta, which is what
# the closed-form p_H1 assumes; the default chain multiplies the mirror
# escape of the cavity model by the elements behind it
n = 50_000
escape = cfg.kappa_1h / cfg.kappa_h
behind = np.prod([v for _, v in downstream(cfg.detection_chain)])
params = TrialParams(read=None, statistics="single", inputs=("R", "L"))
for mode, expected in (("lumped", heralding_efficiency(cfg, 0.0)),
                       ("chain", heralding_efficiency(cfg, 0.0) / cfg.eta * escape * behind)):
    ds = run_trials(cfg, params.with_(herald_detection=mode), n, seed=1)
    p, s = binomial_fraction(int(np.count_nonzero(ds["herald_click"])), n)
    print("%-6s herald clicks per photon %.4f +/- %.4f   (closed form %.4f)" % (mode, p, s, expected))

# arrival times of the herald photons; the rise follows the write pulse
hist = histogram(ds, "herald", bin_width=20e-9)
peak = hist.x[np.argmax(hist.estimate)]
print("herald arrival histogram peaks at %.0f ns" % (peak * 1e9))

# same seed, same trials
again = run_trials(cfg, params.with_(herald_detection="chain"), n, seed=1)
print("re-run identical:", np.array_equal(ds["herald_click"], again["herald_click"]))
