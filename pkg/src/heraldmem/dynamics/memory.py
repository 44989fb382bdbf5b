"""Zeeman evolution of the stored F=2 state.

The guiding field points along the quantisation axis; a quasi-static
random field (isotropic, each Cartesian component normal with spread
``b_noise_sigma``) is added per trial.  The spin-2 propagator is
``exp(-i 2 pi nu(B) t B_hat.F)`` with ``nu(B) = g_F mu_B B / h``, so the
|2,+1> and |2,-1> amplitudes acquire the relative phase ``2 pi (2 nu_L) t``.
"""

import numpy as np

F2 = 2
_M = np.arange(-F2, F2 + 1, dtype=float)


def spin_matrices(F=F2):
    """(Fx, Fy, Fz) in the basis m = -F..F."""
    m = np.arange(-F, F + 1, dtype=float)
    fz = np.diag(m)
    # <m+1|F+|m> = sqrt(F(F+1) - m(m+1))
    up = np.sqrt(F * (F + 1) - m[:-1] * (m[:-1] + 1))
    fp = np.diag(up, -1)
    fx = 0.5 * (fp + fp.T)
    fy = -0.5j * (fp - fp.T)
    return fx, fy, fz


_FX, _FY, _FZ = spin_matrices()


def field_propagators(b_vectors, duration, config):
    """Batch of 5x5 propagators for fields ``b_vectors`` (N, 3) in tesla."""
    b = np.atleast_2d(np.asarray(b_vectors, dtype=float))
    t = np.broadcast_to(np.asarray(duration, dtype=float), (b.shape[0],))
    nu = config.constants.larmor_frequency(1.0)  # Hz per tesla
    gen = (b[:, 0, None, None] * _FX + b[:, 1, None, None] * _FY
           + b[:, 2, None, None] * _FZ)
    w, v = np.linalg.eigh(gen)
    phase = np.exp(-2j * np.pi * nu * w * t[:, None])
    return np.einsum("nij,nj,nkj->nik", v, phase, v.conj())


def evolve_storage(stored_state, config, storage_time, rng=None, noise=None):
    """Propagate F=2 amplitudes over the storage time.

    Parameters
    ----------
    stored_state : array_like, shape (5,) or (N, 5)
        Amplitudes on m = -2..2 (normalised).
    storage_time : float or ndarray
        Non-negative duration(s) in seconds.
    rng : numpy Generator, optional
        Source of the quasi-static noise field when ``noise`` is not given.
    noise : ndarray (N, 3), optional
        Standard-normal draws scaled by ``b_noise_sigma``.

    Returns
    -------
    ndarray of the same shape as ``stored_state``.
    """
    psi = np.asarray(stored_state, dtype=complex)
    single = psi.ndim == 1
    psi = np.atleast_2d(psi)
    t = np.broadcast_to(np.asarray(storage_time, dtype=float), (psi.shape[0],))
    if np.any(t < 0):
        raise ValueError("storage time must be non-negative")
    nrm = np.linalg.norm(psi, axis=1)
    if np.any(np.abs(nrm - 1.0) > 1e-9):
        raise ValueError("stored state must be normalised")
    sigma = config.b_noise_sigma
    if sigma > 0:
        if noise is None:
            rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
            noise = rng.standard_normal((psi.shape[0], 3))
        b = sigma * np.asarray(noise, dtype=float)
        b[:, 2] += config.b_field
        U = field_propagators(b, t, config)
        out = np.einsum("nij,nj->ni", U, psi)
    else:
        # pure longitudinal field: diagonal phases
        nu = config.constants.larmor_frequency(config.b_field)
        out = psi * np.exp(-2j * np.pi * nu * _M[None, :] * t[:, None])
    return out[0] if single else out
