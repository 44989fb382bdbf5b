"""Thinning of emitted photons by a chain of independent loss elements."""

import numpy as np


def _effs(chain):
    if isinstance(chain, dict):
        chain = list(chain.items())
    effs = np.array([e for _, e in chain] if chain and isinstance(chain[0], tuple) else chain,
                    dtype=float).reshape(-1)
    if np.any((effs < 0) | (effs > 1)):
        raise ValueError("efficiencies must lie in [0, 1]")
    return effs


def apply_detection_chain(emitted, chain, uniforms=None, rng=None):
    """Pass photons through successive elements with survival probabilities ``chain``.

    Parameters
    ----------
    emitted : bool array (N,)
        Which trials produced a photon at the chain input.
    chain : sequence of floats, sequence of (name, eff) pairs, or dict
    uniforms : ndarray (N, len(chain)), optional
        One uniform per trial and element; drawn from ``rng`` if omitted.

    Returns
    -------
    clicked : bool array (N,)
    absorbed_by : int array (N,)
        Index of the element that removed the photon, -1 when it was
        detected or never emitted.
    """
    emitted = np.atleast_1d(np.asarray(emitted, dtype=bool))
    effs = _effs(chain)
    n = emitted.size
    if uniforms is None:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        uniforms = rng.random((n, effs.size))
    uniforms = np.asarray(uniforms, dtype=float).reshape(n, effs.size)
    alive = emitted.copy()
    absorbed = np.full(n, -1, dtype=np.int64)
    for k, eff in enumerate(effs):
        lost = alive & (uniforms[:, k] >= eff)
        absorbed[lost] = k
        alive &= ~lost
    return alive, absorbed


def downstream(chain, skip=("mirror_escape",)):
    """Chain elements after the cavity mirror, whose escape the dynamics model explicitly."""
    items = list(chain.items()) if isinstance(chain, dict) else list(chain)
    return tuple((k, v) for k, v in items if k not in skip)
