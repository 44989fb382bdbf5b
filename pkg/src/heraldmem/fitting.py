"""Weighted nonlinear least squares and the model-specific fit drivers.

The optimiser is scipy's bounded trust-region reflective least squares
(a damped Gauss-Newton method) with a fixed stopping rule: relative step
norm below ``XTOL`` or ``MAX_ITER`` function evaluations.  Bounds are
respected by every iterate.
"""

from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import lombscargle

from .cavity import _raw_transmission
from .constants import CONSTANTS, TWO_PI
from .storage import heralding_efficiency, storage_efficiency

XTOL = 1e-10
MAX_ITER = 500
JAC_RTOL = 1e-4


class FitError(RuntimeError):
    """Fit could not be carried out (degenerate data, singular Jacobian)."""


class NonIdentifiable(FitError):
    """A requested parameter cannot be determined from the data."""


@dataclass
class FitResult:
    names: tuple
    values: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def params(self):
        return dict(zip(self.names, (float(v) for v in self.values)))

    @property
    def sigma(self):
        return dict(zip(self.names, np.sqrt(np.clip(np.diag(self.covariance), 0, None)).tolist()))

    def __getitem__(self, name):
        return self.params[name]

    def to_dict(self):
        return {
            "names": list(self.names),
            "parameters": self.params,
            "sigma": self.sigma,
            "covariance": np.asarray(self.covariance).tolist(),
            "residual_norm": self.residual_norm,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "diagnostics": _jsonable(self.diagnostics),
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        # key order is not preserved by sort_keys; the name list is
        names = tuple(d.get("names", d["parameters"]))
        return cls(names, np.array([d["parameters"][n] for n in names]), np.array(d["covariance"]),
                   d["residual_norm"], d["converged"], d["iterations"], d.get("diagnostics", {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def central_jacobian(fun, p, rel_step=1e-6):
    """Central finite-difference Jacobian of ``fun`` (vector output) at ``p``."""
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(p.size):
        h = rel_step * max(abs(p[i]), 1e-12)
        a, b = p.copy(), p.copy()
        a[i] += h
        b[i] -= h
        cols.append((np.asarray(fun(a)) - np.asarray(fun(b))) / (2 * h))
    return np.stack(cols, axis=1)


def jacobian_check(jac, fun, p, rel_step=1e-6):
    """Largest per-column relative difference between ``jac`` and central differences."""
    ja = np.asarray(jac(p), dtype=float)
    jn = central_jacobian(fun, p, rel_step)
    scale = np.maximum(np.linalg.norm(jn, axis=0), 1e-300)
    return float(np.max(np.linalg.norm(ja - jn, axis=0) / scale))


def nls_fit(model, data, p0, bounds=None, jac=None, names=None, weighted=True):
    """Fit ``model(x, *p)`` to a :class:`ScanResult`.

    Parameters
    ----------
    model : callable
        ``model(x, *params) -> y``.
    data : ScanResult
        Points with ``estimate`` and (for weighted fits) ``sigma > 0``.
    p0 : sequence of float
        Starting point, inside ``bounds``.
    bounds : (lower, upper), optional
    jac : callable, optional
        ``jac(x, *params) -> (n, k)`` model Jacobian.  When given, it is
        compared with central differences at the optimum
        (``diagnostics['jacobian_check']``).
    weighted : bool
        Weights 1/sigma^2; otherwise unit weights and the covariance is
        scaled by the residual variance.
    """
    x, y = data.x, data.estimate
    p0 = np.asarray(p0, dtype=float)
    k = p0.size
    names = tuple(names) if names is not None else tuple(f"p{i}" for i in range(k))
    if len(names) != k:
        raise ValueError("names do not match the number of parameters")
    if x.size < k:
        raise FitError(f"{x.size} points cannot determine {k} parameters")
    lo, hi = (np.full(k, -np.inf), np.full(k, np.inf)) if bounds is None else map(np.asarray, bounds)
    lo, hi = np.broadcast_to(lo, (k,)).astype(float), np.broadcast_to(hi, (k,)).astype(float)
    if np.any(p0 < lo) or np.any(p0 > hi):
        raise ValueError("initial guess outside bounds")
    if weighted:
        if np.any(data.sigma <= 0):
            raise ValueError("weighted fit needs positive sigma for every point")
        w = 1.0 / data.sigma
    else:
        w = np.ones_like(y)

    def resid(p):
        return (np.asarray(model(x, *p), dtype=float) - y) * w

    def rjac(p):
        return np.asarray(jac(x, *p), dtype=float) * w[:, None]

    res = least_squares(resid, p0, jac=rjac if jac is not None else "3-point",
                        bounds=(lo, hi), method="trf", x_scale="jac",
                        xtol=XTOL, ftol=None, gtol=None, max_nfev=MAX_ITER)
    J = res.jac
    if not np.all(np.isfinite(J)):
        raise FitError("non-finite Jacobian at the solution")
    # rank test on unit-norm columns so parameter units do not matter
    scale = np.linalg.norm(J, axis=0)
    if np.any(scale == 0):
        raise FitError("singular Jacobian at the solution")
    Jn = J / scale
    sv = np.linalg.svd(Jn, compute_uv=False)
    if sv[-1] < 1e-8 * sv[0]:
        raise FitError("singular Jacobian at the solution")
    cov = np.linalg.inv(Jn.T @ Jn) / np.outer(scale, scale)
    rss = float(np.sum(res.fun ** 2))
    dof = x.size - k
    if not weighted:
        cov = cov * (rss / dof if dof > 0 else 0.0)
    cov = 0.5 * (cov + cov.T)
    diag = {"status": int(res.status), "message": res.message, "chi2": rss, "dof": dof,
            "weighted": weighted}
    if jac is not None:
        diag["jacobian_check"] = jacobian_check(rjac, resid, res.x)
    return FitResult(names, res.x, cov, float(np.sqrt(rss)), bool(res.status > 0),
                     int(res.nfev), diag)


# ---------------------------------------------------------------------------
# spectra

def lorentzian(x, kappa_hz, centre_hz, amplitude):
    """amplitude * k^2 / (k^2 + (x - x0)^2) with HWHM ``kappa_hz``."""
    d = x - centre_hz
    return amplitude * kappa_hz ** 2 / (kappa_hz ** 2 + d ** 2)


def lorentzian_jac(x, kappa_hz, centre_hz, amplitude):
    d = x - centre_hz
    den = kappa_hz ** 2 + d ** 2
    dk = amplitude * 2 * kappa_hz * d ** 2 / den ** 2
    dc = amplitude * kappa_hz ** 2 * 2 * d / den ** 2
    da = kappa_hz ** 2 / den
    return np.stack([dk, dc, da], axis=1)


def fit_lorentzian(spectrum, weighted=True):
    """Cavity linewidth (HWHM kappa/2pi in Hz), centre and height."""
    x, y = spectrum.x, spectrum.estimate
    i = int(np.argmax(y))
    half = x[y >= 0.5 * y[i]]
    k0 = max(0.5 * (half.max() - half.min()), np.min(np.diff(np.sort(x))))
    span = x.max() - x.min()
    return nls_fit(lorentzian, spectrum, [k0, x[i], y[i]],
                   bounds=([0.0, x.min() - span, 0.0], [10 * span, x.max() + span, np.inf]),
                   jac=lorentzian_jac, names=("kappa_hz", "centre_hz", "amplitude"),
                   weighted=weighted)


def fit_normal_mode(spectrum, kappa_hz, gamma_hz=CONSTANTS.gamma_atom / TWO_PI, g0_hz=None,
                    weighted=True):
    """Atom-cavity coupling from a normal-mode transmission spectrum.

    ``kappa_hz`` and ``gamma_hz`` are fixed (angular rate / 2 pi).  Fitted:
    ``g_hz``, the common resonance offset ``centre_hz`` and ``amplitude``.
    """
    kappa, gamma = TWO_PI * kappa_hz, TWO_PI * gamma_hz

    def model(x, g_hz, centre_hz, amplitude):
        return amplitude * _raw_transmission("normal_mode", x, kappa, TWO_PI * g_hz, gamma,
                                             centre_hz, centre_hz)

    x, y = spectrum.x, spectrum.estimate
    if g0_hz is None:
        # peak separation ~ 2 g for well resolved modes
        left, right = x < np.median(x), x >= np.median(x)
        xl = x[left][np.argmax(y[left])] if left.any() else x.min()
        xr = x[right][np.argmax(y[right])] if right.any() else x.max()
        g0_hz = max(0.5 * abs(xr - xl), 0.1 * kappa_hz)
        c0 = 0.5 * (xl + xr)
    else:
        c0 = float(x[np.argmin(np.abs(x - np.average(x, weights=np.clip(y, 0, None) + 1e-300)))])
    span = x.max() - x.min()
    return nls_fit(model, spectrum, [g0_hz, c0, max(y.max(), 1e-12)],
                   bounds=([0.0, x.min() - span, 0.0], [10 * span, x.max() + span, np.inf]),
                   names=("g_hz", "centre_hz", "amplitude"), weighted=weighted)


# ---------------------------------------------------------------------------
# detuning-dependent storage and heralding

_STAGE1 = ("mu_fc_sq", "mu_rc_sq", "reduction")


def _with(config, mu_fc_sq, mu_rc_sq, reduction):
    return config.with_(mu_fc_sq=float(mu_fc_sq), mu_rc_sq=float(mu_rc_sq),
                        coupling_reduction=float(reduction), eta_herald=None,
                        detection_chain=())


def storage_model(config):
    def model(x, mu_fc_sq, mu_rc_sq, reduction):
        c = _with(config, mu_fc_sq, mu_rc_sq, reduction)
        return np.array([storage_efficiency(c, d) for d in x])
    return model


def fit_detuning_model(storage, heralding, config, p0=(0.7, 0.9, 0.7), eta0=0.25, weighted=True):
    """Two-stage fit of the storage and heralding curves versus detuning.

    Stage one fits ``(mu_fc_sq, mu_rc_sq, reduction)`` to the storage
    efficiencies with every other rate taken from ``config``.  Stage two
    freezes them and fits the overall herald detection efficiency ``eta``.
    The stage-one uncertainty is carried into ``eta`` to first order
    (``d eta / d theta`` of the stage-two optimum), so the returned
    covariance has the full 4 x 4 structure.
    """
    for scan in (storage, heralding):
        if np.unique(scan.x).size < 3:
            raise FitError("each scan needs at least three distinct detunings")
        if not np.any(np.isclose(scan.x, 0.0, atol=1e-6 * max(np.abs(scan.x).max(), 1.0))):
            raise FitError("scans must include zero detuning")
    s1 = nls_fit(storage_model(config), storage, p0, bounds=([1e-6] * 3, [1.0] * 3),
                 names=_STAGE1, weighted=weighted)
    def shape(theta, x):
        c = _with(config, *theta)
        return np.array([heralding_efficiency(c, d, eta=1.0) for d in x])

    def hmodel(x, eta):
        return eta * shape(s1.values, x)

    def hjac(x, eta):
        return shape(s1.values, x)[:, None]

    s2 = nls_fit(hmodel, heralding, [eta0], bounds=([0.0], [1.0]), jac=hjac, names=("eta",),
                 weighted=weighted)
    # eta is linear in the model, so its optimum for given theta is closed form
    w = 1.0 / heralding.sigma ** 2 if weighted else np.ones(len(heralding))

    def eta_hat(theta):
        f = shape(theta, heralding.x)
        return float(np.sum(w * f * heralding.estimate) / np.sum(w * f * f))

    grad = np.zeros(3)
    for i in range(3):
        h = 1e-6
        up, dn = s1.values.copy(), s1.values.copy()
        up[i] = min(up[i] + h, 1.0)
        dn[i] = max(dn[i] - h, 1e-6)
        grad[i] = (eta_hat(up) - eta_hat(dn)) / (up[i] - dn[i])
    cov = np.zeros((4, 4))
    cov[:3, :3] = s1.covariance
    cov[:3, 3] = cov[3, :3] = s1.covariance @ grad
    cov[3, 3] = s2.covariance[0, 0] + grad @ s1.covariance @ grad
    return FitResult(_STAGE1 + ("eta",), np.r_[s1.values, s2.values], cov,
                     float(math.hypot(s1.residual_norm, s2.residual_norm)),
                     s1.converged and s2.converged, s1.iterations + s2.iterations,
                     {"stage1": s1.diagnostics, "stage2": s2.diagnostics,
                      "stage1_residual_norm": s1.residual_norm,
                      "stage2_residual_norm": s2.residual_norm,
                      "eta_stage2_sigma": float(np.sqrt(s2.covariance[0, 0])),
                      "d_eta_d_theta": grad})


# ---------------------------------------------------------------------------
# coherence

def oscillating(t, visibility, tau, freq, t0):
    """F(t) = (1 + V exp(-(t/tau)^2) cos(2 pi f (t - t0))) / 2."""
    env = np.exp(-(t / tau) ** 2)
    return 0.5 * (1.0 + visibility * env * np.cos(TWO_PI * freq * (t - t0)))


def oscillating_jac(t, visibility, tau, freq, t0):
    env = np.exp(-(t / tau) ** 2)
    ph = TWO_PI * freq * (t - t0)
    c, s = np.cos(ph), np.sin(ph)
    return np.stack([
        0.5 * env * c,
        0.5 * visibility * env * c * 2 * t ** 2 / tau ** 3,
        -0.5 * visibility * env * s * TWO_PI * (t - t0),
        0.5 * visibility * env * s * TWO_PI * freq,
    ], axis=1)


def decaying(t, f0, tau):
    """F(t) = 1/2 + (F0 - 1/2) exp(-(t/tau)^2)."""
    return 0.5 + (f0 - 0.5) * np.exp(-(t / tau) ** 2)


def decaying_jac(t, f0, tau):
    env = np.exp(-(t / tau) ** 2)
    return np.stack([env, (f0 - 0.5) * env * 2 * t ** 2 / tau ** 3], axis=1)


def threshold_time(f0, tau, threshold):
    """Time at which :func:`decaying` falls to ``threshold`` (inf if never)."""
    if f0 <= threshold:
        return 0.0
    if threshold <= 0.5:
        return math.inf
    return tau * math.sqrt(math.log((f0 - 0.5) / (threshold - 0.5)))


def _initial_frequency(t, y):
    dt = np.median(np.diff(np.sort(t)))
    span = t.max() - t.min()
    f_lo, f_hi = 0.5 / span, 0.5 / dt
    freqs = np.linspace(f_lo, f_hi, 4000)
    power = lombscargle(t, y - y.mean(), TWO_PI * freqs)
    i = int(np.argmax(power))
    if i >= freqs.size - 5:
        raise NonIdentifiable("frequency at the Nyquist limit: time grid too coarse")
    return freqs[i]


def fit_coherence(data, kind="oscillating", threshold=0.69, weighted=True):
    """Fit fidelity versus storage time.

    ``oscillating``: :func:`oscillating` with visibility, Gaussian envelope
    time, frequency and time offset.  Constant data give visibility 0 with
    ``diagnostics['frequency_identifiable'] = False``.

    ``decaying``: :func:`decaying`; ``diagnostics`` carries the threshold
    crossing time and its first-order uncertainty.
    """
    t, y = data.x, data.estimate
    if kind == "oscillating":
        if t.size < 6:
            raise FitError("oscillating fit needs at least six time points")
        spread = np.ptp(y)
        noise = np.median(data.sigma) if np.all(data.sigma > 0) else 0.0
        if spread <= max(2 * noise, 1e-12):
            return FitResult(("visibility", "tau", "freq", "t0"),
                             np.array([0.0, np.inf, np.nan, np.nan]), np.full((4, 4), np.nan),
                             float(np.sqrt(np.sum(((y - y.mean()) / (data.sigma if noise else 1)) ** 2))),
                             False, 0, {"frequency_identifiable": False})
        f0 = _initial_frequency(t, y)
        i_max = int(np.argmax(y))
        v0 = min(0.999, max(2 * y.max() - 1, 0.05))
        span = t.max() - t.min()
        lo = [0.0, 0.2 * f0, t.min() - 1.0 / f0]
        hi = [1.0, 5 * f0, t.max() + 1.0 / f0]
        try:
            res = nls_fit(oscillating, data, [v0, 4 * span, f0, t[i_max]],
                          bounds=([lo[0], 1e-3 * span, *lo[1:]], [hi[0], 1e3 * span, *hi[1:]]),
                          jac=oscillating_jac, names=("visibility", "tau", "freq", "t0"),
                          weighted=weighted)
            res.diagnostics["envelope_identifiable"] = True
        except FitError:
            # no visible decay inside the window: fit a constant envelope
            def flat(x, v, f, t0):
                return oscillating(x, v, np.inf, f, t0)

            def flat_jac(x, v, f, t0):
                return oscillating_jac(x, v, np.inf, f, t0)[:, [0, 2, 3]]
            r3 = nls_fit(flat, data, [v0, f0, t[i_max]], bounds=(lo, hi), jac=flat_jac,
                         names=("visibility", "freq", "t0"), weighted=weighted)
            cov = np.full((4, 4), np.nan)
            keep = [0, 2, 3]
            cov[np.ix_(keep, keep)] = r3.covariance
            v, f, t0 = r3.values
            res = FitResult(("visibility", "tau", "freq", "t0"), np.array([v, np.inf, f, t0]), cov,
                            r3.residual_norm, r3.converged, r3.iterations,
                            dict(r3.diagnostics, envelope_identifiable=False))
        res.diagnostics["frequency_identifiable"] = True
        return res
    if kind == "decaying":
        if t.size < 3:
            raise FitError("decaying fit needs at least three time points")
        span = t.max() - t.min()
        f0 = float(np.clip(y[np.argmin(t)], 0.5 + 1e-6, 1.0))
        res = nls_fit(decaying, data, [f0, 0.5 * span + t.min() + 1e-12],
                      bounds=([0.5, 1e-3 * max(span, 1e-12)], [1.0, 1e3 * max(span, t.max())]),
                      jac=decaying_jac, names=("f0", "tau"), weighted=weighted)
        f, tau = res.values
        tt = threshold_time(f, tau, threshold)
        sig = float("nan")
        if math.isfinite(tt) and tt > 0:
            g = np.array([tau ** 2 / (2 * tt * (f - 0.5)), tt / tau])
            sig = float(np.sqrt(g @ res.covariance @ g))
        res.diagnostics.update({"threshold": threshold, "threshold_time": float(tt),
                                "threshold_time_sigma": sig})
        return res
    raise ValueError("kind must be 'oscillating' or 'decaying'")
