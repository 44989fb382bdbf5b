# Process tomography of the memory, with and without the herald.
#
# Six input polarisations, three measurement bases.  A small preparation
# error is injected: atoms that started in the wrong state rarely emit a
# herald, so conditioning on the herald filters them out.

import numpy as np

from heraldmem import reference_config
from heraldmem.dynamics import TrialParams, run_trials
from heraldmem.stats import CountTable, condition_on_herald
from heraldmem.tomography import fidelities, process_mle

cfg = reference_config().with_(prep_error_f1=0.05, prep_error_f2=0.05)
ds = run_trials(cfg, TrialParams(), 30_000, seed=3)

for name, data in (("unconditioned", ds), ("conditioned", condition_on_herald(ds))):
    table = CountTable.from_dataset(data)
    chi = process_mle(table)
    f = fidelities(chi)
    print("%-14s %5d clicks   F_p %.3f   average state fidelity %.3f"
          % (name, int(table.counts.sum()), f["F_p"], f["F_s_avg"]))

# the chi matrix is close to the identity channel: chi_II dominates
print("\nchi (real part, conditioned):")
print(np.array2string(chi.chi.real, precision=3, suppress_small=True))
