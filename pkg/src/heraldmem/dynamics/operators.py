"""Single-excitation basis shared by the write and read-out dynamics.

Sixteen states, ordered as

* ``A`` block (0-5): atom in |1,m>, one photon in the qubit-cavity mode
  of circular polarisation s (s = +1 for sigma+, -1 for sigma-);
* ``E`` block (6-10): atom in |2',m>, m = -2..2, cavities empty;
* ``H`` block (11-15): atom in |2,m>.  During the write this carries one
  photon in the herald cavity; during read-out it is the bare ground state
  driven by the classical pi field.

Couplings are expressed through the effective rates of the storage
transitions (``g_q`` on |1,0>-|2',+-1>, ``g_h`` on |2,+-1>-|2',+-1>); all
other matrix elements follow from the level-scheme amplitude ratios.
"""

import numpy as np

from ..levels import RB87_D2, dipole_element

DIM = 16
A_SLICE = slice(0, 6)
E_SLICE = slice(6, 11)
H_SLICE = slice(11, 16)

# reference amplitudes the effective couplings are quoted on
_REF_Q = RB87_D2.amplitude((1, 0), (2, 1))
_REF_H = RB87_D2.amplitude((2, 1), (2, 1))


def a_index(m, s):
    """Index of |1,m> x (qubit photon, polarisation s)."""
    if m not in (-1, 0, 1) or s not in (1, -1):
        raise ValueError("m in {-1,0,1}, s in {+1,-1}")
    return 2 * (m + 1) + (0 if s == 1 else 1)


def e_index(m):
    if not -2 <= m <= 2:
        raise ValueError("excited m out of range")
    return 6 + m + 2


def h_index(m):
    if not -2 <= m <= 2:
        raise ValueError("F=2 m out of range")
    return 11 + m + 2


def qubit_coupling_matrix():
    """Hermitian pattern of the qubit-cavity coupling, in units of ``g_q``."""
    out = np.zeros((DIM, DIM))
    for m in (-1, 0, 1):
        for s in (1, -1):
            mp = m + s
            amp = RB87_D2.amplitude((1, m), (2, mp))
            if amp:
                i, j = a_index(m, s), e_index(mp)
                out[i, j] = out[j, i] = amp / _REF_Q
    return out


def herald_coupling_matrix():
    """Pi coupling |2,m> <-> |2',m>, in units of ``g_h``."""
    out = np.zeros((DIM, DIM))
    for m in range(-2, 3):
        amp = RB87_D2.amplitude((2, m), (2, m))
        if amp:
            i, j = h_index(m), e_index(m)
            out[i, j] = out[j, i] = amp / _REF_H
    return out


def herald_ratios():
    """r_m = pi amplitude of |2,m>-|2',m> relative to m = +1."""
    return np.array([RB87_D2.amplitude((2, m), (2, m)) / _REF_H for m in range(-2, 3)])


def free_space_jumps():
    """Spontaneous-emission jump operators, normalised so sum L^dag L = 1 on E.

    Returns a dict keyed by ``(F, q)`` with ``q = m' - m`` of the emitted
    photon.  Each operator maps E-block amplitudes to ground amplitudes:
    shape (3, 5) for F=1 and (5, 5) for F=2.  Multiply the squared norm by
    ``2*gamma`` for the jump rate.
    """
    ops = {}
    for F in (1, 2):
        for q in (1, 0, -1):
            L = np.zeros((2 * F + 1, 5))
            for mp in range(-2, 3):
                m = mp - q
                if abs(m) <= F:
                    # reduced element normalised so each F'=2 sublevel sums to 1
                    L[m + F, mp + 2] = np.sqrt(2.0) * dipole_element(F, m, 2, mp)
            ops[(F, q)] = L
    return ops


def build_hamiltonian(g_q, g_h, herald_delta, kappa_q, kappa_h, gamma, mode):
    """Non-Hermitian effective Hamiltonian (rad/s) in the 16-state basis.

    ``mode='write'``: the H block holds a herald photon and decays at
    ``kappa_h`` with detuning ``herald_delta`` (rad/s).  ``mode='read'``:
    the H block is the bare ground level; its coupling is set per time step
    by the classical drive, so only the constant part is returned here.
    """
    H = g_q * qubit_coupling_matrix().astype(complex)
    diag = np.zeros(DIM, dtype=complex)
    diag[A_SLICE] = -1j * kappa_q
    diag[E_SLICE] = -1j * gamma
    if mode == "write":
        H = H + g_h * herald_coupling_matrix()
        diag[H_SLICE] = herald_delta - 1j * kappa_h
    elif mode != "read":
        raise ValueError("mode must be 'write' or 'read'")
    return H + np.diag(diag)


def connected_blocks(pattern):
    """Index groups of a symmetric sparsity pattern (connected components)."""
    n = pattern.shape[0]
    seen, blocks = set(), []
    for start in range(n):
        if start in seen:
            continue
        stack, comp = [start], []
        seen.add(start)
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in np.nonzero(pattern[i])[0]:
                if j not in seen:
                    seen.add(int(j))
                    stack.append(int(j))
        blocks.append(tuple(sorted(comp)))
    return blocks
