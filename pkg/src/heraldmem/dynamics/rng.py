"""Per-trial random streams derived from a counter-based seed tree.

Each trial ``i`` owns the stream ``SeedSequence(seed, spawn_key=(i,))``;
its words depend only on ``(seed, i)``, so any partition of a trial range
reproduces the same draws.  Slots ``0 .. FIXED_SLOTS-1`` have a fixed
meaning (see :mod:`heraldmem.dynamics.trials`); later slots are consumed
sequentially by the read-out trajectory.
"""

import numpy as np
from scipy.special import ndtri

FIXED_SLOTS = 16
_SCALE = 1.0 / 9007199254740992.0  # 2**-53


def _words(seed, trial_id, n_words):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial_id),))
    return ss.generate_state(n_words, dtype=np.uint32)


def _to_uniform(words):
    a = (words[..., 0::2] >> np.uint32(5)).astype(np.float64)
    b = (words[..., 1::2] >> np.uint32(6)).astype(np.float64)
    # open interval (0, 1): safe under log and ndtri
    return (a * 67108864.0 + b + 0.5) * _SCALE


class TrialStreams:
    """Uniform variates for a batch of trials, extendable on demand."""

    def __init__(self, seed, trial_ids, n_uniforms=48):
        if int(seed) < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)
        self.trial_ids = np.asarray(trial_ids, dtype=np.int64)
        self._n = max(int(n_uniforms), FIXED_SLOTS + 1)
        self._u = self._generate(self.trial_ids, self._n)
        self._ptr = np.full(self.trial_ids.size, FIXED_SLOTS, dtype=np.int64)

    def _generate(self, ids, n):
        out = np.empty((ids.size, n))
        for k, tid in enumerate(ids):
            out[k] = _to_uniform(_words(self.seed, tid, 2 * n))
        return out

    def __len__(self):
        return self.trial_ids.size

    def fixed(self, slot, rows=None):
        if not 0 <= slot < FIXED_SLOTS:
            raise IndexError("fixed slot out of range")
        col = self._u[:, slot]
        return col if rows is None else col[rows]

    def normal(self, slot, rows=None):
        return ndtri(self.fixed(slot, rows))

    def next(self, rows):
        """Next sequential uniform for each trial in ``rows`` (index array)."""
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size and self._ptr[rows].max() >= self._n:
            self._extend(2 * self._n)
        vals = self._u[rows, self._ptr[rows]]
        self._ptr[rows] += 1
        return vals

    def _extend(self, n):
        # the SeedSequence prefix is stable, so old columns are unchanged
        self._u = self._generate(self.trial_ids, n)
        self._n = n


class GeneratorStreams:
    """Single-trial adapter so the batch engines accept a numpy Generator."""

    def __init__(self, rng):
        self._rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self._fixed = self._rng.random(FIXED_SLOTS)
        self.trial_ids = np.zeros(1, dtype=np.int64)

    def __len__(self):
        return 1

    def fixed(self, slot, rows=None):
        col = self._fixed[slot:slot + 1]
        return col if rows is None else col[rows]

    def normal(self, slot, rows=None):
        return ndtri(self.fixed(slot, rows))

    def next(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return self._rng.random(rows.size)
