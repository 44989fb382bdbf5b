"""Hyperfine level scheme of the Rb-87 D2 line used by the memory protocol.

Only the levels taking part in the write/read cycle are tabulated:
ground manifolds F=1, F=2 and excited manifolds F'=1, F'=2.  Dipole
amplitudes are computed from Wigner 3j/6j symbols (Racah formulae) and
expressed relative to the closed cycling transition |2,2> <-> |3',3>,
which is the reference dipole for coupling-rate estimates.

Polarisation labels follow the absorption convention: ``q = m' - m``,
so sigma+ (q=+1) raises the magnetic quantum number on excitation.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial, sqrt

NUCLEAR_SPIN = 1.5
J_GROUND = 0.5
J_EXCITED = 1.5

POLARIZATIONS = {"sigma+": 1, "pi": 0, "sigma-": -1}


def _f(x):
    # factorial of a (half-)integer combination that must be a non-negative integer
    n = int(round(x))
    if abs(n - x) > 1e-9 or n < 0:
        raise ValueError("factorial argument must be a non-negative integer")
    return factorial(n)


def _is_int(x):
    return abs(x - round(x)) < 1e-9


def _triangle(a, b, c):
    return (_f(a + b - c) * _f(a - b + c) * _f(-a + b + c)) / _f(a + b + c + 1)


def _triangle_ok(a, b, c):
    return (abs(a - b) <= c <= a + b) and _is_int(a + b + c)


@lru_cache(maxsize=None)
def wigner_3j(j1, j2, j3, m1, m2, m3):
    """Wigner 3j symbol via the Racah formula (floating point)."""
    if abs(m1 + m2 + m3) > 1e-9 or not _triangle_ok(j1, j2, j3):
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0.0
    if not (_is_int(j1 + m1) and _is_int(j2 + m2) and _is_int(j3 + m3)):
        return 0.0
    pref = sqrt(_triangle(j1, j2, j3) * _f(j1 + m1) * _f(j1 - m1) * _f(j2 + m2)
                * _f(j2 - m2) * _f(j3 + m3) * _f(j3 - m3))
    kmin = int(round(max(0, j2 - j3 - m1, j1 - j3 + m2)))
    kmax = int(round(min(j1 + j2 - j3, j1 - m1, j2 + m2)))
    total = 0.0
    for k in range(kmin, kmax + 1):
        total += (-1) ** k / (
            _f(k) * _f(j3 - j2 + k + m1) * _f(j3 - j1 + k - m2)
            * _f(j1 + j2 - j3 - k) * _f(j1 - k - m1) * _f(j2 - k + m2))
    phase = (-1) ** int(round(j1 - j2 - m3))
    return phase * pref * total


@lru_cache(maxsize=None)
def wigner_6j(j1, j2, j3, j4, j5, j6):
    """Wigner 6j symbol {j1 j2 j3; j4 j5 j6} via the Racah formula."""
    triads = ((j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3))
    if not all(_triangle_ok(*t) for t in triads):
        return 0.0
    pref = sqrt(_triangle(j1, j2, j3) * _triangle(j1, j5, j6)
                * _triangle(j4, j2, j6) * _triangle(j4, j5, j3))
    sums = [sum(t) for t in triads]
    tmin = int(round(max(sums)))
    tmax = int(round(min(j1 + j2 + j4 + j5, j2 + j3 + j5 + j6, j3 + j1 + j6 + j4)))
    total = 0.0
    for t in range(tmin, tmax + 1):
        denom = 1
        for s in sums:
            denom *= _f(t - s)
        denom *= (_f(j1 + j2 + j4 + j5 - t) * _f(j2 + j3 + j5 + j6 - t)
                  * _f(j3 + j1 + j6 + j4 - t))
        total += (-1) ** t * _f(t + 1) / denom
    return pref * total


def dipole_element(F, m, Fp, mp):
    """<F m| d_q |F' m'> in units of the reduced <J||d||J'> element.

    ``q = m' - m``; returns 0 for forbidden combinations.
    """
    q = mp - m
    if abs(q) > 1:
        return 0.0
    I, J, Jp = NUCLEAR_SPIN, J_GROUND, J_EXCITED
    reduced_F = ((-1) ** int(round(Fp + J + 1 + I)) * sqrt((2 * Fp + 1) * (2 * J + 1))
                 * wigner_6j(J, Jp, 1, Fp, F, I))
    return (reduced_F * (-1) ** int(round(Fp - 1 + m)) * sqrt(2 * F + 1)
            * wigner_3j(Fp, 1, F, mp, -q, -m))


_CYCLING = None


def relative_dipole(F, m, Fp, mp):
    """Dipole amplitude relative to the |2,2> <-> |3',3> cycling transition."""
    global _CYCLING
    if _CYCLING is None:
        _CYCLING = dipole_element(2, 2, 3, 3)
    return dipole_element(F, m, Fp, mp) / _CYCLING


def _polarization_name(q):
    return {1: "sigma+", 0: "pi", -1: "sigma-"}[q]


@dataclass(frozen=True)
class LevelScheme:
    """Ground/excited labels, allowed dipole amplitudes and decay branching.

    ``transition_table`` maps ``(ground, excited, polarization)`` to the
    amplitude relative to the cycling transition.  ``branching`` maps each
    excited state to the probability of decaying into every ground state.
    """

    ground_states: tuple
    excited_states: tuple
    transition_table: dict = field(repr=False)
    branching: dict = field(repr=False)

    def amplitude(self, ground, excited):
        q = excited[1] - ground[1]
        if abs(q) > 1:
            return 0.0
        return self.transition_table.get((ground, excited, _polarization_name(q)), 0.0)

    def branching_to_manifold(self, excited, F):
        return sum(p for (Fg, _), p in self.branching[excited].items() if Fg == F)


def rb87_d2_scheme(excited_F=(1, 2)):
    ground = tuple((F, m) for F in (1, 2) for m in range(-F, F + 1))
    excited = tuple((Fp, m) for Fp in excited_F for m in range(-Fp, Fp + 1))
    table = {}
    for g in ground:
        for e in excited:
            q = e[1] - g[1]
            if abs(q) > 1 or abs(e[0] - g[0]) > 1:
                continue
            amp = relative_dipole(g[0], g[1], e[0], e[1])
            if abs(amp) > 1e-12:
                table[(g, e, _polarization_name(q))] = amp
    branching = {}
    for e in excited:
        weights = {g: amp ** 2 for (g, ee, _), amp in table.items() if ee == e}
        total = sum(weights.values())
        branching[e] = {g: w / total for g, w in weights.items()}
    return LevelScheme(ground, excited, table, branching)


RB87_D2 = rb87_d2_scheme()
