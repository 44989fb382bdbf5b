"""Polarisation-qubit state and process tomography.

Matrices are written in the circular basis {R, L}.  Processes are stored
as chi matrices in the Pauli basis {I, X, Y, Z} of that basis; the process
fidelity with the identity is ``chi_II``.

Both reconstructions maximise a multinomial likelihood (one multinomial
per input and measurement basis) over a factorised parameterisation, so
every iterate is physical:

* states: ``rho = T T^dag / tr(T T^dag)``;
* processes: Choi matrix ``J = (Y^-1/2 (x) 1) A (Y^-1/2 (x) 1)`` with
  ``A = T T^dag`` and ``Y = tr_out A``, which is trace preserving.

The optimiser is BFGS from a fixed starting point (no randomness); the
stopping rule is a gradient norm below ``GTOL`` on the count-normalised
negative log-likelihood or ``MAXITER`` iterations.
"""

from dataclasses import dataclass
import csv
import io
import json
import math

import numpy as np
from scipy.linalg import sqrtm
from scipy.optimize import minimize

from .config import AXIAL_INPUTS, BASES, PolarizationState, basis_vectors, stokes_from_density
from .stats import CountTable

GTOL = 1e-8
MAXITER = 10_000
_EPS = 1e-300

PAULI = np.array([
    [[1, 0], [0, 1]],
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)
PAULI_LABELS = ("I", "X", "Y", "Z")


class TomographyError(ValueError):
    """Unusable counts or a failed reconstruction."""


def _projectors():
    """E[b, o] = |v><v| for basis b in RL, HV, DA and outcome o."""
    out = np.empty((3, 2, 2, 2), dtype=complex)
    for b, name in enumerate(BASES):
        for o, v in enumerate(basis_vectors(name)):
            out[b, o] = np.outer(v, v.conj())
    return out


PROJ = _projectors()


def _ket(label):
    return PolarizationState.named(label).vector


def _check_density(rho, tol=1e-9):
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError("density matrix must be 2x2")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("density matrix not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValueError("density matrix trace differs from one")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
        raise ValueError("density matrix not positive semidefinite")
    return rho


@dataclass(frozen=True)
class DensityMatrix:
    """Physical 2x2 density matrix in the {R, L} basis."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _check_density(self.matrix))

    @classmethod
    def pure(cls, label_or_vector):
        v = _ket(label_or_vector) if isinstance(label_or_vector, str) else np.asarray(label_or_vector, complex)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    def fidelity(self, label_or_vector):
        v = _ket(label_or_vector) if isinstance(label_or_vector, str) else np.asarray(label_or_vector, complex)
        return float(np.real(v.conj() @ self.matrix @ v))

    def stokes(self):
        return stokes_from_density(self.matrix)

    def trace_distance(self, other):
        m = other.matrix if isinstance(other, DensityMatrix) else np.asarray(other)
        return float(0.5 * np.abs(np.linalg.eigvalsh(self.matrix - m)).sum())

    def to_dict(self):
        return {"basis": ["R", "L"], "real": self.matrix.real.tolist(), "imag": self.matrix.imag.tolist()}


# ---------------------------------------------------------------------------
# process representations

def _vec_basis():
    # column m is the Choi vector of Pauli m: component (i, o) = sigma[o, i]
    return np.stack([p.T.reshape(4) for p in PAULI], axis=1)


_B = _vec_basis()


def choi_from_kraus(kraus):
    J = np.zeros((4, 4), dtype=complex)
    for K in kraus:
        v = np.asarray(K, dtype=complex).T.reshape(4)
        J += np.outer(v, v.conj())
    return J


def chi_from_choi(J):
    return _B.conj().T @ J @ _B / 4.0


def choi_from_chi(chi):
    return _B @ np.asarray(chi) @ _B.conj().T


def apply_choi(J, rho):
    """E(rho) = tr_in[(rho^T (x) 1) J]."""
    M = np.kron(np.asarray(rho).T, np.eye(2)) @ J
    return M.reshape(2, 2, 2, 2).trace(axis1=0, axis2=2)


@dataclass(frozen=True)
class ProcessMatrix:
    """Chi matrix of a qubit channel in the Pauli basis {I, X, Y, Z}."""

    chi: np.ndarray

    def __post_init__(self):
        chi = np.asarray(self.chi, dtype=complex)
        if chi.shape != (4, 4):
            raise ValueError("chi must be 4x4")
        if np.max(np.abs(chi - chi.conj().T)) > 1e-9:
            raise ValueError("chi not Hermitian")
        if np.linalg.eigvalsh(0.5 * (chi + chi.conj().T)).min() < -1e-9:
            raise ValueError("chi not positive semidefinite")
        tp = self._tp_residual(chi)
        if tp > 1e-6:
            raise ValueError(f"chi not trace preserving (residual {tp:.2e})")
        object.__setattr__(self, "chi", chi)

    @staticmethod
    def _tp_residual(chi):
        J = choi_from_chi(chi)
        Y = J.reshape(2, 2, 2, 2).trace(axis1=1, axis2=3)
        return float(np.max(np.abs(Y - np.eye(2))))

    @classmethod
    def from_kraus(cls, kraus):
        return cls(chi_from_choi(choi_from_kraus(kraus)))

    @property
    def choi(self):
        return choi_from_chi(self.chi)

    @property
    def process_fidelity(self):
        return float(self.chi[0, 0].real)

    def apply(self, rho):
        return apply_choi(self.choi, rho)

    def to_dict(self):
        return {"basis": list(PAULI_LABELS), "real": self.chi.real.tolist(), "imag": self.chi.imag.tolist()}


def identity_channel():
    return ProcessMatrix.from_kraus([np.eye(2)])


def depolarizing_channel(p):
    """rho -> (1 - p) rho + p I/2."""
    if not 0 <= p <= 1:
        raise ValueError("p outside [0, 1]")
    w = [math.sqrt(1 - 3 * p / 4)] + [math.sqrt(p / 4)] * 3
    return ProcessMatrix.from_kraus([c * s for c, s in zip(w, PAULI)])


def random_channel(rng, n_kraus=4):
    """Random CPTP map from a Gaussian isometry (QR of a 2k x 2 matrix)."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    g = rng.standard_normal((2 * n_kraus, 2)) + 1j * rng.standard_normal((2 * n_kraus, 2))
    q, _ = np.linalg.qr(g)
    return ProcessMatrix.from_kraus([q[2 * k:2 * k + 2] for k in range(n_kraus)])


# ---------------------------------------------------------------------------
# synthetic counts

def channel_probabilities(process, inputs=AXIAL_INPUTS):
    """p[i, b, o] for each input state, basis and outcome."""
    J = process.choi
    out = np.empty((len(inputs), 3, 2))
    for i, lab in enumerate(inputs):
        rho = apply_choi(J, np.outer(_ket(lab), _ket(lab).conj()))
        out[i] = np.real(np.einsum("boxy,yx->bo", PROJ, rho))
    return np.clip(out, 0.0, 1.0)


def state_probabilities(rho):
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return np.clip(np.real(np.einsum("boxy,yx->bo", PROJ, m)), 0.0, 1.0)


def sample_counts(probs, shots, rng):
    """Multinomial counts per (…, basis) cell from outcome probabilities."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    p = np.asarray(probs, dtype=float)
    p0 = p[..., 0] / p.sum(axis=-1)
    n0 = rng.binomial(shots, p0)
    return np.stack([n0, shots - n0], axis=-1).astype(float)


# ---------------------------------------------------------------------------
# maximum likelihood

def _minimise(fun, x0, jac=None):
    res = minimize(fun, x0, jac=jac if jac is not None else "3-point", method="BFGS",
                   options={"gtol": GTOL, "maxiter": MAXITER})
    if not np.all(np.isfinite(res.x)):
        raise TomographyError("optimiser produced non-finite parameters")
    if res.nit >= MAXITER:
        raise TomographyError("maximum-likelihood fit hit the iteration cap")
    return res


def _t_from_params(x, d):
    T = np.zeros((d, d), dtype=complex)
    il = np.tril_indices(d)
    k = len(il[0])
    T[il] = x[:k] + 1j * x[k:]
    return T


def _params_from_t(T):
    il = np.tril_indices(T.shape[0])
    return np.concatenate([T[il].real, T[il].imag])


def _cholesky_start(M):
    w, v = np.linalg.eigh(0.5 * (M + M.conj().T))
    w = np.maximum(w, 0.0) + 1e-3 * max(w.max(), 1e-12)
    return np.linalg.cholesky((v * w) @ v.conj().T)


def state_mle(counts):
    """Maximum-likelihood density matrix from counts ``N[b, o]`` (3 x 2)."""
    N = np.asarray(counts, dtype=float)
    if N.shape != (3, 2):
        raise TomographyError("state counts must have shape (3, 2)")
    if np.any(N < 0):
        raise TomographyError("negative counts")
    tot = N.sum()
    if tot <= 0:
        raise TomographyError("all counts are zero")
    w = N / tot
    # linear inversion as deterministic start
    f = np.divide(N[:, 0], N.sum(axis=1), out=np.full(3, 0.5), where=N.sum(axis=1) > 0)
    r_lin = 0.5 * np.eye(2)
    for b, comp in zip(range(3), (3, 1, 2)):
        r_lin = r_lin + 0.5 * (2 * f[b] - 1) * PAULI[comp]
    x0 = _params_from_t(_cholesky_start(r_lin))
    E = PROJ.reshape(6, 2, 2)
    wk = w.reshape(6)

    def fun(x):
        T = _t_from_params(x, 2)
        A = T @ T.conj().T
        tr = np.trace(A).real
        pk = np.einsum("kxy,yx->k", E, A).real
        ET = E @ T
        # p_k = tr(E_k A) / tr(A); each basis sums to one
        val = -np.sum(wk * np.log(np.maximum(pk, _EPS))) + np.sum(wk) * math.log(tr)
        g = -np.einsum("k,kxy->xy", np.where(wk > 0, wk / np.maximum(pk, _EPS), 0.0), 2 * ET)
        g = g + np.sum(wk) * 2 * T / tr
        il = np.tril_indices(2)
        return val, np.concatenate([g[il].real, g[il].imag])

    res = _minimise(lambda x: fun(x)[0], x0, jac=lambda x: fun(x)[1])
    T = _t_from_params(res.x, 2)
    A = T @ T.conj().T
    rho = A / np.trace(A).real
    return DensityMatrix(0.5 * (rho + rho.conj().T))


def _choi_from_params(x):
    T = _t_from_params(x, 4)
    A = T @ T.conj().T
    Y = A.reshape(2, 2, 2, 2).trace(axis1=1, axis2=3)
    w, v = np.linalg.eigh(Y)
    Yi = (v / np.sqrt(np.maximum(w, 1e-300))) @ v.conj().T
    K = np.kron(Yi, np.eye(2))
    return K @ A @ K


def _process_gradient(x, Mf, wf):
    """Gradient of the process negative log-likelihood in the Cholesky parameters.

    With ``J = K A K``, ``K = Y^-1/2 (x) 1``: the derivative through
    ``Y^-1/2`` uses the divided-difference (Daleckii-Krein) formula in the
    eigenbasis of ``Y``.
    """
    T = _t_from_params(x, 4)
    A = T @ T.conj().T
    Y = A.reshape(2, 2, 2, 2).trace(axis1=1, axis2=3)
    lam, V = np.linalg.eigh(Y)
    lam = np.maximum(lam, 1e-300)
    f = lam ** -0.5
    Yi = (V * f) @ V.conj().T
    K = np.kron(Yi, np.eye(2))
    J = K @ A @ K
    p = np.einsum("kxy,yx->k", Mf, J).real
    G = -np.einsum("k,kxy->xy", np.where(wf > 0, wf / np.maximum(p, _EPS), 0.0), Mf)
    B = K @ G @ K
    Q = A @ K @ G + G @ K @ A
    R = Q.reshape(2, 2, 2, 2).trace(axis1=1, axis2=3)
    d = lam[:, None] - lam[None, :]
    same = np.abs(d) <= 1e-12 * lam.max()
    L = np.where(same, -0.5 * lam[:, None] ** -1.5,
                 (f[:, None] - f[None, :]) / np.where(same, 1.0, d))
    S = V @ ((V.conj().T @ R @ V) * L) @ V.conj().T
    B = B + np.kron(S, np.eye(2))
    B = 0.5 * (B + B.conj().T)
    g = 2.0 * B @ T
    il = np.tril_indices(4)
    return np.concatenate([g[il].real, g[il].imag])


def process_mle(table):
    """CPTP maximum-likelihood process from a complete :class:`CountTable`."""
    if not isinstance(table, CountTable):
        table = CountTable(np.asarray(table, dtype=float))
    if set(table.inputs) != set(AXIAL_INPUTS) or len(table.inputs) != 6:
        raise TomographyError("process tomography needs all six axial inputs")
    if np.any(table.counts.sum(axis=2) <= 0):
        raise TomographyError("incomplete count grid: an (input, basis) cell is empty")
    N = table.counts
    w = N / N.sum()
    # operators M[i,b,o] = rho_i^T (x) E_bo, so p = tr(J M)
    Ms = np.empty(N.shape + (4, 4), dtype=complex)
    for i, lab in enumerate(table.inputs):
        rho = np.outer(_ket(lab), _ket(lab).conj())
        for b in range(3):
            for o in range(2):
                Ms[i, b, o] = np.kron(rho.T, PROJ[b, o])
    Mf = Ms.reshape(-1, 4, 4)
    wf = w.reshape(-1)

    def fun(x):
        J = _choi_from_params(x)
        p = np.einsum("kxy,yx->k", Mf, J).real
        # each (input, basis) multinomial is normalised by trace preservation
        return -np.sum(wf * np.log(np.maximum(p, _EPS)))

    x0 = _params_from_t(_cholesky_start(_linear_choi(table)))
    res = _minimise(fun, x0, jac=lambda x: _process_gradient(x, Mf, wf))
    J = _choi_from_params(res.x)
    chi = chi_from_choi(0.5 * (J + J.conj().T))
    return ProcessMatrix(chi)


def _linear_choi(table):
    """Linear-inversion Choi matrix (start point of the likelihood search)."""
    rho_out = {}
    for i, lab in enumerate(table.inputs):
        N = table.counts[i]
        f = np.divide(N[:, 0], N.sum(axis=1), out=np.full(3, 0.5), where=N.sum(axis=1) > 0)
        r = 0.5 * np.eye(2, dtype=complex)
        for b, comp in zip(range(3), (3, 1, 2)):
            r = r + 0.5 * (2 * f[b] - 1) * PAULI[comp]
        rho_out[lab] = r
    # E(|R><L|) = ((E(H) - E(V)) + i (E(D) - E(A))) / 2
    RR, LL = rho_out["R"], rho_out["L"]
    RL = 0.5 * ((rho_out["H"] - rho_out["V"]) + 1j * (rho_out["D"] - rho_out["A"]))
    LR = RL.conj().T
    J = np.zeros((4, 4), dtype=complex)
    for (i, j), blk in {(0, 0): RR, (0, 1): RL, (1, 0): LR, (1, 1): LL}.items():
        J[2 * i:2 * i + 2, 2 * j:2 * j + 2] = blk
    return J


# ---------------------------------------------------------------------------
# fidelities

def fidelities(result, inputs=AXIAL_INPUTS):
    """State fidelities, their average and (for processes) F_p.

    ``result`` is a :class:`ProcessMatrix` or a mapping ``label ->
    DensityMatrix`` of output states.  Returns a dict with ``F_s`` (per
    input), ``F_s_avg``, ``F_p`` (None for state sets) and
    ``identity_residual`` = F_s_avg - (2 F_p + 1)/3 (None for state sets).
    """
    if isinstance(result, ProcessMatrix):
        J = result.choi
        fs = {}
        for lab in inputs:
            v = _ket(lab)
            rho = apply_choi(J, np.outer(v, v.conj()))
            fs[lab] = float(np.real(v.conj() @ rho @ v))
        avg = float(np.mean(list(fs.values())))
        fp = result.process_fidelity
        return {"F_s": fs, "F_s_avg": avg, "F_p": fp,
                "identity_residual": avg - average_from_process(fp)}
    fs = {}
    for lab in inputs:
        rho = result[lab]
        rho = rho if isinstance(rho, DensityMatrix) else DensityMatrix(rho)
        fs[lab] = rho.fidelity(lab)
    return {"F_s": fs, "F_s_avg": float(np.mean(list(fs.values()))), "F_p": None,
            "identity_residual": None}


def average_from_process(f_p):
    """Average fidelity over the six axial states, (2 F_p + 1) / 3."""
    return (2.0 * f_p + 1.0) / 3.0


def process_from_average(f_avg):
    return (3.0 * f_avg - 1.0) / 2.0


def process_fidelity_between(a, b):
    """Choi-state fidelity between two channels (F_p when ``b`` is the identity)."""
    ja, jb = a.choi / 2.0, b.choi / 2.0
    s = sqrtm(ja)
    val = np.real(np.trace(sqrtm(s @ jb @ s))) ** 2
    return float(val)


# ---------------------------------------------------------------------------
# Monte Carlo uncertainty

def mc_uncertainty(table, estimator, k_samples=200, seed=0):
    """Spread of ``estimator(CountTable)`` under count resampling.

    Each count ``N`` is replaced by a normal draw with mean ``N`` and
    spread ``sqrt(N)`` (clipped at zero).  Returns ``(sigma, n_failed)``;
    samples where the estimator raises are skipped and counted.
    """
    if k_samples < 100:
        raise ValueError("k_samples must be at least 100")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    vals, failed = [], 0
    for _ in range(k_samples):
        c = table.counts + np.sqrt(table.counts) * rng.standard_normal(table.counts.shape)
        try:
            vals.append(float(estimator(CountTable(np.maximum(c, 0.0), table.inputs))))
        except (TomographyError, ValueError, np.linalg.LinAlgError):
            failed += 1
    if len(vals) < 2:
        raise TomographyError(f"estimator failed on {failed} of {k_samples} resamples")
    return float(np.std(vals, ddof=1)), failed


# ---------------------------------------------------------------------------
# export

def to_json(obj, path=None):
    text = json.dumps(obj.to_dict(), indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return text


def from_json(text):
    d = json.loads(text)
    m = np.array(d["real"]) + 1j * np.array(d["imag"])
    return ProcessMatrix(m) if m.shape == (4, 4) else DensityMatrix(m)


def poincare_csv(states, path=None):
    """CSV of (label, S1, S2, S3) for a mapping label -> DensityMatrix."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "S1", "S2", "S3"])
    for lab, rho in states.items():
        rho = rho if isinstance(rho, DensityMatrix) else DensityMatrix(rho)
        w.writerow([lab, *[f"{s:.12g}" for s in rho.stokes()]])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
