"""Driven read-out: Monte Carlo wave-function trajectories in batch.

A classical pi-polarised pulse enters the herald cavity through its
outcoupler.  The intracavity field obeys

    d alpha/dt = -(kappa_H - i Delta) alpha + sqrt(2 kappa_1H) mu_H beta(t),

with ``|beta|^2`` the incident photon flux (integral ``n``) and ``mu_H``
the herald fibre mode matching.  The atom sees the Rabi coupling
``g_h r_m alpha(t)`` on |2,m> <-> |2',m>.  Vacuum fluctuations of the herald
mode add the Purcell decay ``gamma_P`` (a pi jump back into F=2).

Jumps and their fate:

* qubit-cavity emission: the read-out photon (terminal);
* free-space decay to F=1: terminal, no photon;
* free-space decay to F=2 or a herald-cavity pi photon: the atom
  re-enters the drive and may emit later with a corrupted state.

Trajectories are advanced with precomputed step propagators; arithmetic
is row-wise so each trial's result is independent of batch composition.
"""

import numpy as np

from ..storage import purcell_rate
from .operators import (A_SLICE, DIM, E_SLICE, H_SLICE, a_index, build_hamiltonian,
                        connected_blocks, free_space_jumps, herald_coupling_matrix,
                        herald_ratios)
from .write import max_rate

CHANNELS = ("cavity", "F1_p", "F1_0", "F1_m", "F2_p", "F2_0", "F2_m", "herald")
_QS = (1, 0, -1)


def drive_field(config, pulse, times):
    """Intracavity herald field alpha(t) (photon-number amplitude) on ``times``."""
    cfg = config
    mu_h = np.sqrt(dict(cfg.detection_chain).get("fibre_mode_matching", 1.0))
    k = cfg.kappa_h - 2j * np.pi * cfg.herald_detuning
    c = np.sqrt(2.0 * cfg.kappa_1h) * mu_h * np.sqrt(pulse.mean_photon_number)
    dt = times[1] - times[0]
    src = c * pulse.amplitude(times)
    src_h = c * pulse.amplitude(times[:-1] + 0.5 * dt)
    out = np.zeros(times.size, dtype=complex)
    a = 0j
    for i in range(times.size - 1):
        f = lambda x, s: -k * x + s  # noqa: E731
        k1 = f(a, src[i])
        k2 = f(a + 0.5 * dt * k1, src_h[i])
        k3 = f(a + 0.5 * dt * k2, src_h[i])
        k4 = f(a + dt * k3, src[i + 1])
        a = a + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = a
    return out


class ReadoutEngine:
    """Precomputed propagators for one configuration and read pulse.

    Parameters
    ----------
    config : SystemConfig
    pulse : PulseEnvelope
        Read drive; ``mean_photon_number`` is the incident photon number.
    step : float
        Jump-detection resolution (s).
    rate_factor : float
        Inner RK4 step is at most ``1 / (rate_factor * max rate)``.
    tail : float
        Time simulated after the drive ends (s).
    """

    def __init__(self, config, pulse, step=0.5e-9, rate_factor=50.0, tail=100e-9):
        self.config = cfg = config
        self.pulse = pulse
        t_end = pulse.duration + tail
        n_coarse = int(np.ceil(t_end / step))
        self.step = t_end / n_coarse
        self.times = np.linspace(0.0, t_end, n_coarse + 1)
        self.gamma_p = purcell_rate(cfg.g_h, cfg.kappa_h, cfg.herald_detuning)
        r = herald_ratios()
        H0 = build_hamiltonian(cfg.g_q, cfg.g_h, 0.0, cfg.kappa_q, cfg.kappa_h, cfg.gamma, "read")
        H0[E_SLICE, E_SLICE] += np.diag(-1j * self.gamma_p * r ** 2)
        # drive pattern: |2',m><2,m| times g_h r_m
        D = np.triu(herald_coupling_matrix())  # rows E, columns H
        drive_rate = max(max_rate(cfg), self.gamma_p * 4.0)
        n_sub = max(1, int(np.ceil(self.step * rate_factor * drive_rate)))
        self.n_sub = n_sub
        fine = np.linspace(0.0, t_end, n_coarse * n_sub + 1)
        alpha = drive_field(cfg, pulse, np.linspace(0.0, t_end, 2 * n_coarse * n_sub + 1))
        self.alpha = alpha[::2 * n_sub]
        self.U = self._propagators(H0, cfg.g_h * D, alpha, fine, n_sub)
        pattern = (np.abs(self.U).sum(axis=0) > 0) | np.eye(DIM, dtype=bool)
        self.blocks = [np.array(b) for b in connected_blocks(pattern | pattern.T)]
        self._ublocks = [self.U[:, b][:, :, b] for b in self.blocks]
        self._jumps = free_space_jumps()
        self._r = r

    @staticmethod
    def _propagators(H0, D, alpha, fine, n_sub):
        dt = fine[1] - fine[0]
        n_coarse = (fine.size - 1) // n_sub
        Us = np.empty((n_coarse, DIM, DIM), dtype=complex)

        def M(a):
            return -1j * (H0 + a * D + np.conj(a) * D.T)
        for k in range(n_coarse):
            Y = np.eye(DIM, dtype=complex)
            for j in range(n_sub):
                i = 2 * (k * n_sub + j)
                m0, mh, m1 = M(alpha[i]), M(alpha[i + 1]), M(alpha[i + 2])
                k1 = m0 @ Y
                k2 = mh @ (Y + 0.5 * dt * k1)
                k3 = mh @ (Y + 0.5 * dt * k2)
                k4 = m1 @ (Y + dt * k3)
                Y = Y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            Us[k] = Y
        return Us

    # ------------------------------------------------------------------
    # States are held column-major, shape (16, n), so every update below is
    # an element-wise operation on contiguous rows: a trial's numbers never
    # depend on which other trials share the batch.

    def _apply(self, k, psi):
        out = np.empty_like(psi)
        for blk, sub in zip(self.blocks, self._ublocks):
            # sum over a short middle axis: fixed sequential order per element
            out[blk] = (sub[k][:, :, None] * psi[blk][None, :, :]).sum(axis=1)
        return out

    def _rates(self, psi):
        cfg = self.config
        A, E = psi[A_SLICE], psi[E_SLICE]
        cols = [2.0 * cfg.kappa_q * np.sum(np.abs(A) ** 2, axis=0)]
        for F in (1, 2):
            for q in _QS:
                cols.append(2.0 * cfg.gamma * np.sum(np.abs(_lmul(self._jumps[(F, q)], E)) ** 2, axis=0))
        cols.append(2.0 * self.gamma_p * np.sum(np.abs(E * self._r[:, None]) ** 2, axis=0))
        return np.stack(cols, axis=1)

    def run(self, states, streams, rows, bases, chunk=8192):
        """Simulate read-out for stored states.

        Parameters
        ----------
        states : ndarray (N, 5)
            Normalised F=2 amplitudes at the start of the drive.
        streams : TrialStreams-like
            Uniform source; ``rows`` index into it.
        rows : int array (N,)
        bases : ndarray (N, 2)
            Measurement vector of the first outcome per trial (Jones, {R,L}).

        Returns
        -------
        dict of per-trial arrays: ``emitted``, ``time``, ``outcome``
        (0 first basis state, 1 second, -1 none), ``stokes`` (N, 3),
        ``end`` (channel index that ended the trajectory, -1 if none),
        ``n_jumps``.
        """
        states = np.asarray(states, dtype=complex).reshape(-1, 5)
        rows = np.asarray(rows, dtype=np.int64)
        bases = np.asarray(bases, dtype=complex).reshape(-1, 2)
        parts = [self._run_chunk(states[i:i + chunk], streams, rows[i:i + chunk],
                                 bases[i:i + chunk])
                 for i in range(0, max(states.shape[0], 1), chunk)]
        return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}

    def _run_chunk(self, states, streams, rows, bases):
        cfg = self.config
        n = states.shape[0]
        emitted = np.zeros(n, dtype=bool)
        when = np.full(n, np.nan)
        outcome = np.full(n, -1, dtype=np.int64)
        stokes = np.full((n, 3), np.nan)
        end = np.full(n, -1, dtype=np.int64)
        n_jumps = np.zeros(n, dtype=np.int64)
        p_out = cfg.kappa_1q / cfg.kappa_q
        # active set: trial positions, their states and jump thresholds
        idx = np.arange(n)
        psi = np.zeros((DIM, n), dtype=complex)
        psi[H_SLICE] = states.T
        thresh = streams.next(rows)
        for k in range(self.U.shape[0]):
            if idx.size == 0:
                break
            psi = self._apply(k, psi)
            jump = np.sum(psi.real ** 2 + psi.imag ** 2, axis=0) < thresh
            if not jump.any():
                continue
            loc = np.nonzero(jump)[0]
            jr = idx[loc]
            sub = psi[:, loc]
            rates = self._rates(sub)
            tot = rates.sum(axis=1, keepdims=True)
            cdf = np.cumsum(rates / np.where(tot > 0, tot, 1.0), axis=1)
            ch = (streams.next(rows[jr])[:, None] >= cdf[:, :-1]).sum(axis=1)
            n_jumps[jr] += 1
            done = tot[:, 0] <= 0  # numerically empty state: stop
            # qubit-cavity photon
            cav = np.nonzero(ch == 0)[0]
            if cav.size:
                rr = jr[cav]
                leaves = streams.next(rows[rr]) < p_out
                uo = streams.next(rows[rr])
                rho = self._photon_density(sub[:, cav])
                v = bases[rr]
                p1 = np.real(np.einsum("ni,nij,nj->n", v.conj(), rho, v))
                end[rr] = 0
                out_r = rr[leaves]
                emitted[out_r] = True
                when[out_r] = self.times[k + 1]
                stokes[out_r] = _stokes(rho[leaves])
                outcome[out_r] = np.where(uo < p1, 0, 1)[leaves]
                done[cav] = True
            # free-space decay to F=1
            f1 = np.nonzero((ch >= 1) & (ch <= 3))[0]
            end[jr[f1]] = ch[f1]
            done[f1] = True
            # back into F=2: restart from the projected state
            for c in range(4, 8):
                sel = np.nonzero((ch == c) & ~done)[0]
                if not sel.size:
                    continue
                E = sub[E_SLICE][:, sel]
                new = _lmul(self._jumps[(2, _QS[c - 4])], E) if c < 7 else E * self._r[:, None]
                new = new / np.sqrt(np.sum(np.abs(new) ** 2, axis=0))
                fresh = np.zeros((DIM, sel.size), dtype=complex)
                fresh[H_SLICE] = new
                psi[:, loc[sel]] = fresh
                thresh[loc[sel]] = streams.next(rows[jr[sel]])
            if done.any():
                keep = np.ones(idx.size, dtype=bool)
                keep[loc[done]] = False
                idx, psi, thresh = idx[keep], psi[:, keep], thresh[keep]
        return {"emitted": emitted, "time": when, "outcome": outcome,
                "stokes": stokes, "end": end, "n_jumps": n_jumps}

    @staticmethod
    def _photon_density(psi):
        """Polarisation density matrix of the cavity photon, atom traced out.

        ``psi`` is column-major (16, n); returns (n, 2, 2).
        """
        rho = np.zeros((psi.shape[1], 2, 2), dtype=complex)
        for m in (-1, 0, 1):
            v = np.stack([psi[a_index(m, 1)], psi[a_index(m, -1)]], axis=1)
            rho += v[:, :, None] * v.conj()[:, None, :]
        tr = np.real(rho[:, 0, 0] + rho[:, 1, 1])
        return rho / np.where(tr > 0, tr, 1.0)[:, None, None]

    def transfer_to_f1(self, states, streams, rows):
        """Fraction of trajectories that leave F=2 (any terminal jump)."""
        res = self.run(states, streams, rows, np.tile([1.0 + 0j, 0j], (states.shape[0], 1)))
        return float(np.mean(res["end"] >= 0))


def _lmul(L, X):
    """L @ X for column-major X, accumulated element-wise (batch independent)."""
    out = np.zeros((L.shape[0], X.shape[1]), dtype=complex)
    for i in range(L.shape[0]):
        for j in range(L.shape[1]):
            if L[i, j]:
                out[i] = out[i] + L[i, j] * X[j]
    return out


def _stokes(rho):
    return np.stack([2.0 * rho[:, 0, 1].real, -2.0 * rho[:, 0, 1].imag,
                     np.real(rho[:, 0, 0] - rho[:, 1, 1])], axis=1)


def simulate_readout(stored_state, config, read_pulse, rng, basis=(1.0, 0.0), engine=None):
    """Read-out of one stored F=2 state (single-trial convenience wrapper).

    Raises ``ValueError`` if ``stored_state`` is None.
    """
    from .rng import GeneratorStreams

    if stored_state is None:
        raise ValueError("no stored state to read out")
    engine = engine or ReadoutEngine(config, read_pulse)
    st = np.atleast_2d(np.asarray(stored_state, dtype=complex))
    res = engine.run(st, GeneratorStreams(rng), np.zeros(1, dtype=np.int64),
                     np.atleast_2d(np.asarray(basis, dtype=complex)))
    return {k: v[0] for k, v in res.items()}


