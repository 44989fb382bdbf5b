"""Write process: single-excitation amplitude equations plus jump sampling.

The input pulse couples into the qubit-cavity mode through the outcoupler
with rate ``sqrt(2 kappa_1Q) * mu_in``.  Because the equations are linear
in the source, one solution per (initial Zeeman state, circular
polarisation) suffices; any input polarisation is their superposition.

Channel fluxes are normalised per input photon.  For a coherent pulse the
terminal channels (herald-cavity photon, free-space decay into F=2) form
an inhomogeneous Poisson process of rate ``n * flux(t)``; its first event
ends the write.  Non-terminal scattering (free-space decay into F=1,
cavity loss, reflection, cavity Raman scattering within F=1) is assumed
to leave the atom in its initial state, which is exact for reflected
photons and an approximation whenever the atom changes sublevel.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ..storage import loss_fractions, purcell_rate
from .operators import (A_SLICE, E_SLICE, H_SLICE, a_index, build_hamiltonian,
                        free_space_jumps)

DRIVE_OVERLAPS = ("matched", "geometric", "fibre", "reflection")
TERMINAL = ("herald_escape", "herald_internal", "fs_F2_p", "fs_F2_0", "fs_F2_m")
NON_TERMINAL = ("reflected", "raman_out", "cavity_loss", "fs_F1")
_Q_OF = {"fs_F2_p": 1, "fs_F2_0": 0, "fs_F2_m": -1}


class IntegrationError(RuntimeError):
    """Raised when the amplitude integration violates probability accounting."""


def drive_overlap(config, kind="matched"):
    """Amplitude overlap of the incoming fibre mode with the cavity mode.

    A single driven mode cannot hold the interference between the fibre
    and reflected-mode overlaps that enters the closed-form reflection
    fraction, so the choice is a convention:

    ``matched``
        sqrt(P_A(config) / P_A(unit overlaps)), evaluated at the
        configured herald detuning: the absorbed fraction then equals the
        closed-form one.  With both overlaps equal to one every convention
        gives 1.
    ``geometric``
        (mu_FC^2 mu_RC^2)^(1/4), uncalibrated; a few per cent below the
        closed form at the fitted parameters.
    ``fibre``, ``reflection``
        One overlap alone.
    """
    if kind == "matched":
        gp = purcell_rate(config.g_h, config.kappa_h, config.herald_detuning)
        unit = loss_fractions(config.with_(mu_fc_sq=1.0, mu_rc_sq=1.0), gp).p_atom_scattered
        if unit <= 0:
            return 0.0
        return float(np.sqrt(max(loss_fractions(config, gp).p_atom_scattered, 0.0) / unit))
    if kind == "geometric":
        return (config.mu_fc_sq * config.mu_rc_sq) ** 0.25
    if kind == "fibre":
        return config.mu_fc_sq ** 0.5
    if kind == "reflection":
        return config.mu_rc_sq ** 0.5
    raise ValueError(f"drive overlap must be one of {DRIVE_OVERLAPS}")


def max_rate(config):
    """Largest rate in the write/read generators (rad/s), for the step size."""
    return max(config.kappa_q, config.kappa_h, config.gamma,
               np.sqrt(2.0) * config.g_q, 2.0 * config.g_h,
               abs(2 * np.pi * config.herald_detuning))


def _rk4_inhomogeneous(M, B, src, t, dt):
    """Integrate dC/dt = M C + B src(t) on the grid ``t`` (C starts at 0)."""
    C = np.zeros((M.shape[0], B.shape[1]), dtype=complex)
    out = np.empty((t.size, *C.shape), dtype=complex)
    out[0] = C
    s0 = src(t)
    sh = src(t[:-1] + 0.5 * dt)
    for k in range(t.size - 1):
        k1 = M @ C + B * s0[k]
        k2 = M @ (C + 0.5 * dt * k1) + B * sh[k]
        k3 = M @ (C + 0.5 * dt * k2) + B * sh[k]
        k4 = M @ (C + dt * k3) + B * s0[k + 1]
        C = C + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = C
    return out


@dataclass(frozen=True)
class WriteAmplitudes:
    """Deterministic write solution for one initial state and polarisation.

    ``states`` has shape (K, 16); ``fluxes`` and ``cumulative`` map channel
    names to arrays on ``times`` (per input photon).
    """

    times: np.ndarray
    states: np.ndarray
    fluxes: dict = field(repr=False)
    cumulative: dict = field(repr=False)
    input_flux: np.ndarray = field(repr=False)
    initial_m: int = 0

    @property
    def c_cavity(self):
        m = self.initial_m
        return self.states[:, [a_index(m, 1), a_index(m, -1)]]

    @property
    def c_excited(self):
        return self.states[:, E_SLICE]

    @property
    def c_herald(self):
        return self.states[:, H_SLICE]

    @property
    def norm(self):
        return np.sum(np.abs(self.states) ** 2, axis=1)

    def budget_residual(self):
        """Delivered photon flux minus (norm + all channel integrals)."""
        delivered = cumulative_trapezoid(self.input_flux, self.times, initial=0.0)
        used = self.norm + sum(self.cumulative.values())
        return delivered - used

    @cached_property
    def terminal_cumulative(self):
        return sum(self.cumulative[c] for c in TERMINAL)

    def transfer_probability(self):
        """Single-photon probability of ending in F=2."""
        return float(self.terminal_cumulative[-1])

    def herald_probability(self):
        """Single-photon probability of a herald photon leaving the outcoupler."""
        return float(self.cumulative["herald_escape"][-1])

    def stored_state(self, channel, t):
        """Normalised F=2 amplitudes (m = -2..2) left by ``channel`` at time ``t``.

        ``t`` may be an array; the result then has shape (len(t), 5).
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if channel in ("herald_escape", "herald_internal"):
            src = self.states[:, H_SLICE]
        elif channel in _Q_OF:
            L = free_space_jumps()[(2, _Q_OF[channel])]
            src = self.states[:, E_SLICE] @ L.T
        else:
            raise ValueError(f"{channel!r} does not transfer to F=2")
        k = np.clip(np.searchsorted(self.times, t) - 1, 0, self.times.size - 2)
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        vec = (1 - w)[:, None] * src[k] + w[:, None] * src[k + 1]
        nrm = np.linalg.norm(vec, axis=1, keepdims=True)
        return np.divide(vec, nrm, out=np.zeros_like(vec), where=nrm > 0)


class WriteSolver:
    """Precomputed write solutions for a configuration and pulse shape.

    Parameters
    ----------
    config : SystemConfig
    pulse : PulseEnvelope
        Only the temporal shape is used here; polarisation and photon number
        enter when sampling trials.
    drive : str
        Input overlap convention, see :func:`drive_overlap`.
    rate_factor : float
        Step size is ``1 / (rate_factor * max_rate)``.
    tail : float, optional
        Integration time after the pulse ends (s).  Default ``12/gamma``.
    """

    def __init__(self, config, pulse, drive="matched", rate_factor=50.0, tail=None):
        if rate_factor < 1:
            raise ValueError("rate_factor must be >= 1")
        self.config = config
        self.pulse = pulse
        self.mu_in = drive_overlap(config, drive)
        tail = 12.0 / config.gamma if tail is None else float(tail)
        t_end = pulse.duration + tail
        dt_max = 1.0 / (rate_factor * max_rate(config))
        n = int(np.ceil(t_end / dt_max))
        self.times = np.linspace(0.0, t_end, n + 1)
        self.dt = self.times[1] - self.times[0]
        self._solve()
        self._cache = {}

    def _solve(self):
        cfg = self.config
        H = build_hamiltonian(cfg.g_q, cfg.g_h, 2 * np.pi * cfg.herald_detuning,
                              cfg.kappa_q, cfg.kappa_h, cfg.gamma, "write")
        M = -1j * H
        cols = [(m, s) for m in (-1, 0, 1) for s in (1, -1)]
        B = np.zeros((16, len(cols)), dtype=complex)
        for j, (m, s) in enumerate(cols):
            B[a_index(m, s), j] = np.sqrt(2.0 * cfg.kappa_1q) * self.mu_in
        sol = _rk4_inhomogeneous(M, B, self.pulse.amplitude, self.times, self.dt)
        self._basis = {c: sol[:, :, j] for j, c in enumerate(cols)}
        self._xi = self.pulse.amplitude(self.times)

    def amplitudes(self, input_vector, initial_m=0):
        """Solution for Jones vector ``(R, L)`` and initial |1, initial_m>."""
        vec = np.asarray(input_vector, dtype=complex)
        key = (initial_m, vec.tobytes())
        if key in self._cache:
            return self._cache[key]
        if initial_m not in (-1, 0, 1):
            raise ValueError("initial state must be in F=1")
        if abs(np.vdot(vec, vec).real - 1.0) > 1e-9:
            raise ValueError("input polarisation must be normalised")
        st = vec[0] * self._basis[(initial_m, 1)] + vec[1] * self._basis[(initial_m, -1)]
        amp = self._build(st, vec, initial_m)
        self._cache[key] = amp
        return amp

    def _build(self, st, vec, m0):
        cfg = self.config
        A, E, Hh = st[:, A_SLICE], st[:, E_SLICE], st[:, H_SLICE]
        nA = np.sum(np.abs(A) ** 2, axis=1)
        nH = np.sum(np.abs(Hh) ** 2, axis=1)
        jumps = free_space_jumps()
        g2 = 2.0 * cfg.gamma
        flux = {
            "herald_escape": 2.0 * cfg.kappa_1h * nH,
            "herald_internal": 2.0 * (cfg.kappa_h - cfg.kappa_1h) * nH,
            "cavity_loss": 2.0 * (cfg.kappa_q - cfg.kappa_1q) * nA,
            "fs_F1": g2 * sum(np.sum(np.abs(E @ jumps[(1, q)].T) ** 2, axis=1) for q in (1, 0, -1)),
        }
        for name, q in _Q_OF.items():
            flux[name] = g2 * np.sum(np.abs(E @ jumps[(2, q)].T) ** 2, axis=1)
        # reflected: uncoupled fraction plus the interfering cavity output
        xi = self._xi
        refl = (1.0 - self.mu_in ** 2) * xi ** 2
        for s, p in ((1, vec[0]), (-1, vec[1])):
            out = np.sqrt(2.0 * cfg.kappa_1q) * st[:, a_index(m0, s)] - self.mu_in * p * xi
            refl = refl + np.abs(out) ** 2
        flux["reflected"] = refl
        # cavity photons that left the atom in another F=1 sublevel
        other = [a_index(m, s) for m in (-1, 0, 1) for s in (1, -1) if m != m0]
        flux["raman_out"] = 2.0 * cfg.kappa_1q * np.sum(np.abs(st[:, other]) ** 2, axis=1)
        cum = {k: cumulative_trapezoid(v, self.times, initial=0.0) for k, v in flux.items()}
        amp = WriteAmplitudes(self.times, st, flux, cum, xi ** 2, m0)
        res = np.max(np.abs(amp.budget_residual()))
        if not np.isfinite(res) or res > 1e-4:
            raise IntegrationError(f"probability accounting violated by {res:.2e}")
        return amp

    # ---- sampling ------------------------------------------------------
    def sample(self, amp, n_mean, u_time, u_channel, u_scatter, statistics="coherent"):
        """Sample the write outcome for a batch of trials.

        Parameters
        ----------
        amp : WriteAmplitudes
        n_mean : float
            Mean photon number of the coherent pulse (ignored for single photons).
        u_time, u_channel, u_scatter : ndarray
            Independent uniforms in (0, 1), one per trial.

        Returns
        -------
        dict of arrays: ``transferred`` (bool), ``time`` (nan if none),
        ``channel`` (index into TERMINAL or -1), ``scattered_f1`` (bool),
        ``stored`` (N, 5) complex.
        """
        n = u_time.size
        cum = amp.terminal_cumulative
        t = amp.times
        if statistics == "coherent":
            hazard = n_mean * cum
            target = -np.log(u_time)
        elif statistics == "single":
            hazard = cum
            target = u_time
        else:
            raise ValueError("statistics must be 'coherent' or 'single'")
        transferred = target < hazard[-1]
        when = np.full(n, np.nan)
        if transferred.any():
            when[transferred] = np.interp(target[transferred], hazard, t)
        channel = np.full(n, -1, dtype=np.int64)
        stored = np.zeros((n, 5), dtype=complex)
        idx = np.nonzero(transferred)[0]
        if idx.size:
            rates = np.stack([np.interp(when[idx], t, amp.fluxes[c]) for c in TERMINAL], axis=1)
            tot = rates.sum(axis=1, keepdims=True)
            cdf = np.cumsum(rates / np.where(tot > 0, tot, 1.0), axis=1)
            pick = (u_channel[idx, None] >= cdf[:, :-1]).sum(axis=1)
            channel[idx] = pick
            for j, name in enumerate(TERMINAL):
                sel = idx[pick == j]
                if sel.size:
                    stored[sel] = amp.stored_state(name, when[sel])
        # F=1 scattering before the write ended (labels failed trials only)
        f1 = amp.cumulative["fs_F1"]
        stop = np.where(transferred, when, t[-1])
        f1_at = np.interp(stop, t, f1)
        if statistics == "coherent":
            p_sc = -np.expm1(-n_mean * f1_at)
        else:
            lost = sum(amp.cumulative[c][-1] for c in NON_TERMINAL)
            p_sc = np.full(n, f1[-1] / lost if lost > 0 else 0.0)
        return {
            "transferred": transferred,
            "time": when,
            "channel": channel,
            "scattered_f1": (~transferred) & (u_scatter < p_sc),
            "stored": stored,
        }


def simulate_write(config, pulse, rng, initial_m=0, drive="matched", statistics="coherent",
                   solver=None):
    """Write portion of one trial (see :class:`WriteSolver` for the model).

    Returns a dict with the sampled outcome for a single trial; ``rng`` is a
    numpy Generator or seed.  Use :func:`heraldmem.dynamics.run_trials` for
    batches.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    solver = solver or WriteSolver(config, pulse, drive)
    amp = solver.amplitudes(pulse.polarization.vector, initial_m)
    u = np.maximum(rng.random(3), 1e-300)
    out = solver.sample(amp, pulse.mean_photon_number, u[:1], u[1:2], u[2:3], statistics)
    return {k: v[0] for k, v in out.items()}


def purcell_model_rate(config):
    """Purcell rate into the herald cavity at the configured detuning (rad/s)."""
    return purcell_rate(config.g_h, config.kappa_h, config.herald_detuning)
