"""Validated configuration of the two-cavity / one-atom system.

The on-disk format is TOML with SI units encoded in key suffixes
(``_m``, ``_hz``, ``_t``, ``_ppm``).  Rates given as ``*_hz`` are the
angular rate divided by 2*pi.  See ``data/reference.toml`` for every key.
"""

from dataclasses import dataclass, field, replace
from importlib import resources
import math

import numpy as np
import tomli
import tomli_w

from .cavity import decay_rates
from .constants import CONSTANTS, PhysicalConstants, TWO_PI


class ConfigError(ValueError):
    """Raised for missing keys, out-of-range values or inconsistent rates."""


# --------------------------------------------------------------------------
# polarisation and pulses

_SQ = 1.0 / math.sqrt(2.0)
_NAMED = {
    "R": (1.0, 0.0),
    "L": (0.0, 1.0),
    "H": (_SQ, _SQ),
    "V": (_SQ, -_SQ),
    "D": (_SQ, 1j * _SQ),
    "A": (_SQ, -1j * _SQ),
}
AXIAL_INPUTS = ("R", "L", "H", "V", "D", "A")
BASES = ("RL", "HV", "DA")


@dataclass(frozen=True)
class PolarizationState:
    """Jones vector in the circular {R, L} basis (R drives sigma+)."""

    alpha: complex
    beta: complex

    def __post_init__(self):
        n = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"polarisation not normalised (|a|^2+|b|^2 = {n})")

    @classmethod
    def named(cls, label):
        try:
            a, b = _NAMED[label]
        except KeyError:
            raise ValueError(f"unknown polarisation {label!r}") from None
        return cls(complex(a), complex(b))

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=complex)
        vec = vec / np.linalg.norm(vec)
        return cls(complex(vec[0]), complex(vec[1]))

    @property
    def vector(self):
        return np.array([self.alpha, self.beta], dtype=complex)

    def stokes(self):
        """(S1, S2, S3) with S1 along H/V, S2 along D/A, S3 along R/L."""
        v = self.vector
        rho = np.outer(v, v.conj())
        return stokes_from_density(rho)


def stokes_from_density(rho):
    # in the {R,L} basis: S3 = <R|rho|R> - <L|rho|L>, S1 = 2 Re rho_RL, S2 = -2 Im rho_RL
    s1 = 2.0 * rho[0, 1].real
    s2 = -2.0 * rho[0, 1].imag
    s3 = (rho[0, 0] - rho[1, 1]).real
    return float(s1), float(s2), float(s3)


def basis_vectors(basis):
    """Orthonormal pair (first, second) for 'RL', 'HV' or 'DA'."""
    a, b = basis
    return PolarizationState.named(a).vector, PolarizationState.named(b).vector


def _sin2_ramp(x):
    return np.sin(0.5 * np.pi * np.clip(x, 0.0, 1.0)) ** 2


@dataclass(frozen=True)
class PulseEnvelope:
    """Temporal intensity envelope of a coherent pulse on ``[0, duration]``.

    ``shape`` is ``"quasi_rectangular"`` (flat top with sin^2 edges of length
    ``rise_time``) or ``"smooth"`` (linear interpolation of ``samples``,
    equally spaced over the window).  ``intensity(t)`` integrates to one.
    """

    shape: str
    duration: float
    mean_photon_number: float
    polarization: PolarizationState = field(default_factory=lambda: PolarizationState.named("R"))
    rise_time: float = 20e-9
    samples: tuple = ()
    _norm: float = field(init=False, repr=False, compare=False, default=1.0)

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("pulse duration must be positive")
        if self.mean_photon_number < 0:
            raise ValueError("mean photon number must be non-negative")
        if self.shape == "quasi_rectangular":
            if not 0 < self.rise_time <= 0.5 * self.duration:
                raise ValueError("rise time must lie in (0, duration/2]")
        elif self.shape == "smooth":
            s = np.asarray(self.samples, dtype=float)
            if s.size < 2 or np.any(s < 0) or s.sum() <= 0:
                raise ValueError("smooth pulse needs >= 2 non-negative samples")
        else:
            raise ValueError(f"unknown pulse shape {self.shape!r}")
        t = np.linspace(0.0, self.duration, 20001)
        area = np.trapezoid(self._raw(t), t)
        object.__setattr__(self, "_norm", area)

    def _raw(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= self.duration)
        if self.shape == "quasi_rectangular":
            r = self.rise_time
            val = _sin2_ramp(t / r) * _sin2_ramp((self.duration - t) / r)
        else:
            s = np.asarray(self.samples, dtype=float)
            grid = np.linspace(0.0, self.duration, s.size)
            val = np.interp(t, grid, s)
        return np.where(inside, val, 0.0)

    def intensity(self, t):
        """Normalised intensity envelope (1/s)."""
        return self._raw(t) / self._norm

    def amplitude(self, t):
        """Single-photon wavepacket amplitude sqrt(intensity)."""
        return np.sqrt(self.intensity(t))

    def with_(self, **changes):
        return replace(self, **changes)


def write_pulse(polarization="R", mean_photon_number=0.5, duration=740e-9, rise_time=20e-9):
    pol = polarization if isinstance(polarization, PolarizationState) else PolarizationState.named(polarization)
    return PulseEnvelope("quasi_rectangular", duration, mean_photon_number, pol, rise_time)


def read_pulse(mean_photon_number=6.0, duration=730e-9, rise_time=20e-9):
    # pi-polarised classical drive; the Jones vector is unused for the herald cavity
    return PulseEnvelope("quasi_rectangular", duration, mean_photon_number,
                         PolarizationState.named("H"), rise_time)


def smooth_pulse(duration, mean_photon_number, polarization="R", n_samples=101):
    """Hann-shaped pulse given as tabulated samples."""
    pol = polarization if isinstance(polarization, PolarizationState) else PolarizationState.named(polarization)
    x = np.linspace(0.0, 1.0, n_samples)
    samples = tuple(float(v) for v in np.sin(np.pi * x) ** 2)
    return PulseEnvelope("smooth", duration, mean_photon_number, pol, samples=samples)


# --------------------------------------------------------------------------
# cavities and system


@dataclass(frozen=True)
class CavityParams:
    length: float
    finesse: float
    roc_outcoupler: tuple
    roc_backmirror: tuple
    t_outcoupler: float  # ppm
    t_backmirror: float  # ppm
    kappa: float = field(init=False)
    kappa_out: float = field(init=False)
    fsr: float = field(init=False)

    def __post_init__(self):
        try:
            kappa, kappa_out, fsr = decay_rates(self.length, self.finesse, self.t_outcoupler * 1e-6)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.t_backmirror < 0:
            raise ConfigError("back-mirror transmission must be non-negative")
        for r in (*self.roc_outcoupler, *self.roc_backmirror):
            if r <= 0:
                raise ConfigError("radii of curvature must be positive")
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "kappa_out", kappa_out)
        object.__setattr__(self, "fsr", fsr)

    @property
    def escape_efficiency(self):
        """Probability that an intracavity photon leaves through the outcoupler."""
        return self.kappa_out / self.kappa


HERALD_CHAIN_KEYS = ("mirror_escape", "fibre_mode_matching", "path_transmission", "detector")


@dataclass(frozen=True)
class SystemConfig:
    """Physical parameters of the crossed-cavity memory.

    ``g_qubit`` and ``g_herald`` are the expected (geometric) coupling rates
    on the storage transitions |1,0>-|2',+-1> and |2,+-1>-|2',+-1>; the
    effective couplings are these times ``coupling_reduction``.
    """

    qubit_cavity: CavityParams
    herald_cavity: CavityParams
    g_qubit: float
    g_herald: float
    coupling_reduction: float = 1.0
    mu_fc_sq: float = 1.0
    mu_rc_sq: float = 1.0
    herald_detuning: float = 0.0
    detection_chain: tuple = ()
    readout_chain: tuple = ()
    eta_herald: float = None
    eta_tolerance: float = 0.05
    b_field: float = 0.0
    b_noise_sigma: float = 0.0
    classical_fidelity_bound: float = 0.69
    prep_error_f1: float = 0.0
    prep_error_f2: float = 0.0
    constants: PhysicalConstants = field(default=CONSTANTS, compare=False)

    def __post_init__(self):
        probs = {
            "coupling_reduction": self.coupling_reduction,
            "mu_fc_sq": self.mu_fc_sq,
            "mu_rc_sq": self.mu_rc_sq,
            "classical_fidelity_bound": self.classical_fidelity_bound,
            "prep_error_f1": self.prep_error_f1,
            "prep_error_f2": self.prep_error_f2,
        }
        if self.eta_herald is not None:
            probs["eta_herald"] = self.eta_herald
        for name, eff in (*self.detection_chain, *self.readout_chain):
            probs[f"efficiency {name}"] = eff
        for name, v in probs.items():
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} = {v} outside [0, 1]")
        if self.prep_error_f1 + self.prep_error_f2 > 1.0:
            raise ConfigError("preparation error populations exceed 1")
        if self.g_qubit < 0 or self.g_herald < 0:
            raise ConfigError("coupling rates must be non-negative")
        if self.b_noise_sigma < 0:
            raise ConfigError("b_noise_sigma must be non-negative")
        if self.eta_herald is not None and self.detection_chain:
            prod = float(np.prod([e for _, e in self.detection_chain]))
            if abs(prod - self.eta_herald) > self.eta_tolerance:
                raise ConfigError(
                    f"eta_herald = {self.eta_herald} inconsistent with detection chain product {prod:.4f}")

    # effective rates ------------------------------------------------------
    @property
    def g_q(self):
        return self.coupling_reduction * self.g_qubit

    @property
    def g_h(self):
        return self.coupling_reduction * self.g_herald

    @property
    def kappa_q(self):
        return self.qubit_cavity.kappa

    @property
    def kappa_1q(self):
        return self.qubit_cavity.kappa_out

    @property
    def kappa_h(self):
        return self.herald_cavity.kappa

    @property
    def kappa_1h(self):
        return self.herald_cavity.kappa_out

    @property
    def gamma(self):
        return self.constants.gamma_atom

    @property
    def eta(self):
        """Lumped herald detection efficiency (falls back to the chain product)."""
        if self.eta_herald is not None:
            return self.eta_herald
        return float(np.prod([e for _, e in self.detection_chain])) if self.detection_chain else 1.0

    def chain(self, side="herald"):
        return dict(self.detection_chain if side == "herald" else self.readout_chain)

    def with_(self, **changes):
        return replace(self, **changes)


# --------------------------------------------------------------------------
# document <-> config

_CAV_KEYS = ("length_m", "finesse", "roc_outcoupler_x_m", "roc_outcoupler_y_m",
             "roc_backmirror_x_m", "roc_backmirror_y_m", "t_outcoupler_ppm", "t_backmirror_ppm")


def _req(section, key, where):
    try:
        return section[key]
    except (KeyError, TypeError):
        raise ConfigError(f"missing field {where}.{key}") from None


def _cavity_from(doc, name):
    sec = doc.get(name)
    if sec is None:
        raise ConfigError(f"missing section [{name}]")
    v = {k: float(_req(sec, k, name)) for k in _CAV_KEYS}
    cav = CavityParams(
        length=v["length_m"],
        finesse=v["finesse"],
        roc_outcoupler=(v["roc_outcoupler_x_m"], v["roc_outcoupler_y_m"]),
        roc_backmirror=(v["roc_backmirror_x_m"], v["roc_backmirror_y_m"]),
        t_outcoupler=v["t_outcoupler_ppm"],
        t_backmirror=v["t_backmirror_ppm"],
    )
    # optional stated rates are cross-checked against the derived ones
    for key, derived in (("kappa_hz", cav.kappa), ("kappa_out_hz", cav.kappa_out)):
        if key in sec:
            stated = float(sec[key]) * TWO_PI
            if abs(stated - derived) > 0.01 * derived:
                raise ConfigError(
                    f"{name}.{key} = {sec[key]} inconsistent with derived {derived / TWO_PI:.6g}")
    return cav


_KNOWN = {
    "qubit_cavity": set(_CAV_KEYS) | {"kappa_hz", "kappa_out_hz"},
    "herald_cavity": set(_CAV_KEYS) | {"kappa_hz", "kappa_out_hz"},
    "coupling": {"g_qubit_hz", "g_herald_hz", "reduction"},
    "mode_matching": {"mu_fc_sq", "mu_rc_sq"},
    "herald": {"detuning_hz", "eta", "eta_tolerance"},
    "detection": {"herald", "readout"},
    "field": {"b_field_t", "b_noise_sigma_t"},
    "preparation": {"f1_side_population", "f2_population"},
    "memory": {"classical_fidelity_bound"},
}


def _check_keys(doc):
    # a misspelt key would otherwise fall back to its default silently
    for sec, val in doc.items():
        if sec not in _KNOWN:
            raise ConfigError(f"unknown section or key {sec!r}")
        if not isinstance(val, dict):
            raise ConfigError(f"[{sec}] must be a table")
        extra = sorted(set(val) - _KNOWN[sec])
        if extra:
            raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(extra)}")


def config_from_dict(doc):
    _check_keys(doc)
    coupling = _req(doc, "coupling", "")
    mm = doc.get("mode_matching", {})
    herald = doc.get("herald", {})
    det = doc.get("detection", {})
    fld = doc.get("field", {})
    prep = doc.get("preparation", {})
    mem = doc.get("memory", {})
    herald_chain = det.get("herald", {})
    readout_chain = det.get("readout", {})
    return SystemConfig(
        qubit_cavity=_cavity_from(doc, "qubit_cavity"),
        herald_cavity=_cavity_from(doc, "herald_cavity"),
        g_qubit=TWO_PI * float(_req(coupling, "g_qubit_hz", "coupling")),
        g_herald=TWO_PI * float(_req(coupling, "g_herald_hz", "coupling")),
        coupling_reduction=float(coupling.get("reduction", 1.0)),
        mu_fc_sq=float(mm.get("mu_fc_sq", 1.0)),
        mu_rc_sq=float(mm.get("mu_rc_sq", 1.0)),
        herald_detuning=float(herald.get("detuning_hz", 0.0)),
        eta_herald=None if "eta" not in herald else float(herald["eta"]),
        eta_tolerance=float(herald.get("eta_tolerance", 0.05)),
        detection_chain=tuple((k, float(v)) for k, v in herald_chain.items()),
        readout_chain=tuple((k, float(v)) for k, v in readout_chain.items()),
        b_field=float(fld.get("b_field_t", 0.0)),
        b_noise_sigma=float(fld.get("b_noise_sigma_t", 0.0)),
        classical_fidelity_bound=float(mem.get("classical_fidelity_bound", 0.69)),
        prep_error_f1=float(prep.get("f1_side_population", 0.0)),
        prep_error_f2=float(prep.get("f2_population", 0.0)),
    )


def config_to_dict(cfg):
    def cav(c):
        return {
            "length_m": c.length,
            "finesse": c.finesse,
            "roc_outcoupler_x_m": c.roc_outcoupler[0],
            "roc_outcoupler_y_m": c.roc_outcoupler[1],
            "roc_backmirror_x_m": c.roc_backmirror[0],
            "roc_backmirror_y_m": c.roc_backmirror[1],
            "t_outcoupler_ppm": c.t_outcoupler,
            "t_backmirror_ppm": c.t_backmirror,
        }

    herald = {"detuning_hz": cfg.herald_detuning, "eta_tolerance": cfg.eta_tolerance}
    if cfg.eta_herald is not None:
        herald["eta"] = cfg.eta_herald
    return {
        "qubit_cavity": cav(cfg.qubit_cavity),
        "herald_cavity": cav(cfg.herald_cavity),
        "coupling": {
            "g_qubit_hz": cfg.g_qubit / TWO_PI,
            "g_herald_hz": cfg.g_herald / TWO_PI,
            "reduction": cfg.coupling_reduction,
        },
        "mode_matching": {"mu_fc_sq": cfg.mu_fc_sq, "mu_rc_sq": cfg.mu_rc_sq},
        "herald": herald,
        "detection": {
            "herald": dict(cfg.detection_chain),
            "readout": dict(cfg.readout_chain),
        },
        "field": {"b_field_t": cfg.b_field, "b_noise_sigma_t": cfg.b_noise_sigma},
        "preparation": {
            "f1_side_population": cfg.prep_error_f1,
            "f2_population": cfg.prep_error_f2,
        },
        "memory": {"classical_fidelity_bound": cfg.classical_fidelity_bound},
    }


def load_config(document):
    """Parse a TOML document (text) into a validated :class:`SystemConfig`."""
    try:
        doc = tomli.loads(document)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config does not parse: {exc}") from None
    return config_from_dict(doc)


def load_config_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return load_config(fh.read())


def emit_config(cfg):
    return tomli_w.dumps(config_to_dict(cfg))


def reference_config():
    """Configuration with the parameter values of the reference experiment."""
    text = resources.files("heraldmem").joinpath("data/reference.toml").read_text(encoding="utf-8")
    return load_config(text)


def apply_overrides(cfg, overrides):
    """Merge a partial nested dict (document layout) into ``cfg``."""
    if not overrides:
        return cfg
    doc = config_to_dict(cfg)
    for section, values in overrides.items():
        if isinstance(values, dict):
            target = doc.setdefault(section, {})
            for k, v in values.items():
                if isinstance(v, dict):
                    target.setdefault(k, {}).update(v)
                else:
                    target[k] = v
        else:
            doc[section] = values
    return config_from_dict(doc)


__all__ = [
    "AXIAL_INPUTS", "BASES", "CavityParams", "ConfigError", "PolarizationState",
    "PulseEnvelope", "SystemConfig", "apply_overrides", "basis_vectors", "config_from_dict",
    "config_to_dict", "emit_config", "load_config", "load_config_file", "reference_config",
    "read_pulse", "smooth_pulse", "stokes_from_density", "write_pulse",
]
