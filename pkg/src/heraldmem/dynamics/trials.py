"""Batch trial runner and the columnar click dataset.

A trial is: optical pumping (with optional preparation error), the write
pulse, storage, and optionally the read-out.  Input polarisation and
measurement basis are assigned from the trial id::

    basis = id % n_bases,   input = (id // n_bases) % n_inputs

so a contiguous block of ``n_inputs * n_bases`` ids covers the full
tomography grid once.

Fixed random slots per trial (see :mod:`heraldmem.dynamics.rng`):

====  ==========================================
0     preparation: which manifold
1     preparation: which Zeeman sublevel
2     write: time of the first terminal event
3     write: terminal channel
4     write: F=1 scattering label of failed trials
5-8   herald detection chain
9-11  quasi-static noise field (x, y, z)
12-15 read-out detection chain
====  ==========================================
"""

from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
import json

import numpy as np

from ..config import (AXIAL_INPUTS, BASES, PolarizationState, PulseEnvelope, basis_vectors,
                      emit_config, load_config, read_pulse, write_pulse)
from .detection import apply_detection_chain, downstream
from .memory import evolve_storage
from .readout import ReadoutEngine
from .rng import TrialStreams
from .write import DRIVE_OVERLAPS, TERMINAL, WriteSolver

WRITE_OUTCOMES = ("reflected_or_lost", "free_space_to_F1", "heralded",
                  "free_space_to_F2", "prepared_in_F2")
TERMINAL_CHANNELS = ("reflected_or_lost", "free_space_to_F1", "free_space_to_F2", "heralded",
                     "readout_emitted", "readout_lost", "prepared_in_F2")
INITIAL_STATES = ("F1_m0", "F1_side", "F2")
FORMAT = "heraldmem-clicks"
FORMAT_VERSION = 1


class ScenarioError(ValueError):
    """Invalid trial parameters."""


def _pulse_to_dict(p):
    if p is None:
        return None
    return {"shape": p.shape, "duration": p.duration, "mean_photon_number": p.mean_photon_number,
            "polarization": [[p.polarization.alpha.real, p.polarization.alpha.imag],
                             [p.polarization.beta.real, p.polarization.beta.imag]],
            "rise_time": p.rise_time, "samples": list(p.samples)}


def _pulse_from_dict(d):
    if d is None:
        return None
    (ar, ai), (br, bi) = d["polarization"]
    return PulseEnvelope(d["shape"], d["duration"], d["mean_photon_number"],
                         PolarizationState(complex(ar, ai), complex(br, bi)),
                         d["rise_time"], tuple(d["samples"]))


@dataclass(frozen=True)
class TrialParams:
    """Scenario parameters of a batch of trials.

    ``storage_time`` is the delay between the end of the write pulse and
    the start of the read pulse (s).  ``read`` is None for write-only runs.
    ``herald_detection`` selects the herald efficiency model: ``chain``
    thins by the configured elements after the cavity mirror, ``lumped``
    uses the single overall efficiency ``config.eta``.
    """

    write: PulseEnvelope = field(default_factory=write_pulse)
    read: PulseEnvelope = field(default_factory=read_pulse)
    inputs: tuple = AXIAL_INPUTS
    bases: tuple = BASES
    statistics: str = "coherent"
    storage_time: float = 0.0
    drive: str = "matched"
    herald_detection: str = "chain"
    rate_factor: float = 50.0
    read_step: float = 0.5e-9

    def __post_init__(self):
        if not self.inputs or any(i not in AXIAL_INPUTS for i in self.inputs):
            raise ScenarioError(f"inputs must be a non-empty subset of {AXIAL_INPUTS}")
        if not self.bases or any(b not in BASES for b in self.bases):
            raise ScenarioError(f"bases must be a non-empty subset of {BASES}")
        if self.statistics not in ("coherent", "single"):
            raise ScenarioError("statistics must be 'coherent' or 'single'")
        if self.storage_time < 0:
            raise ScenarioError("storage time must be non-negative")
        if self.drive not in DRIVE_OVERLAPS:
            raise ScenarioError(f"drive must be one of {DRIVE_OVERLAPS}")
        if self.herald_detection not in ("chain", "lumped"):
            raise ScenarioError("herald_detection must be 'chain' or 'lumped'")
        if self.rate_factor < 1 or self.read_step <= 0:
            raise ScenarioError("rate_factor >= 1 and read_step > 0 required")

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = asdict(self)
        d["write"] = _pulse_to_dict(self.write)
        d["read"] = _pulse_to_dict(self.read)
        d["inputs"] = list(self.inputs)
        d["bases"] = list(self.bases)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["write"] = _pulse_from_dict(d["write"])
        d["read"] = _pulse_from_dict(d["read"])
        d["inputs"] = tuple(d["inputs"])
        d["bases"] = tuple(d["bases"])
        return cls(**d)


# ---------------------------------------------------------------------------
# records and dataset

@dataclass(frozen=True)
class TrialRecord:
    """One trial, assembled from a :class:`ClickDataset` row."""

    trial_id: int
    input_polarization: PolarizationState
    basis: str
    initial_state: str
    write_channel: str
    herald_click: tuple = None       # (time, detector index)
    stored_state: np.ndarray = None  # F=2 amplitudes, m = -2..2
    readout_click: tuple = None      # (time, outcome label)
    terminal_channel: str = "reflected_or_lost"

    @property
    def qubit_amplitudes(self):
        """Amplitudes on (|2,+1>, |2,-1>), or None."""
        if self.stored_state is None:
            return None
        return self.stored_state[3], self.stored_state[1]


FIELDS = (
    ("trial_id", "i8"), ("input_index", "i1"), ("basis_index", "i1"), ("initial", "i1"),
    ("write_channel", "i1"), ("write_time", "f8"), ("herald_emitted", "?"),
    ("herald_click", "?"), ("herald_absorbed_by", "i1"), ("stored", "?"),
    ("stored_state", "c16", 5), ("storage_duration", "f8"),
    ("readout_emitted", "?"), ("readout_time", "f8"), ("readout_click", "?"),
    ("readout_absorbed_by", "i1"), ("readout_outcome", "i1"), ("photon_stokes", "f8", 3),
    ("readout_jumps", "i2"), ("terminal", "i1"),
)
FIELD_NAMES = tuple(f[0] for f in FIELDS)


def _empty_columns(n):
    cols = {}
    for spec in FIELDS:
        name, dt = spec[0], spec[1]
        shape = (n,) if len(spec) == 2 else (n, spec[2])
        cols[name] = np.zeros(shape, dtype=dt)
    return cols


class ClickDataset:
    """Columnar store of trial outcomes with the metadata that produced them.

    Columns are the names in :data:`FIELD_NAMES`; times are in seconds,
    measured from the start of the write pulse (``write_time``) or the read
    pulse (``readout_time``); NaN marks absent events.
    """

    def __init__(self, columns, config_text, params, seed):
        missing = set(FIELD_NAMES) - set(columns)
        if missing:
            raise ValueError(f"missing columns {sorted(missing)}")
        n = len(columns["trial_id"])
        for k in FIELD_NAMES:
            if len(columns[k]) != n:
                raise ValueError(f"column {k} has wrong length")
        self.columns = {k: np.asarray(columns[k]) for k in FIELD_NAMES}
        self.config_text = config_text
        self.params = params if isinstance(params, TrialParams) else TrialParams.from_dict(params)
        self.seed = int(seed)
        self.meta = {}
        st = self.columns["stored"]
        if np.any(st & (np.abs(self.columns["stored_state"]).sum(axis=1) == 0)):
            raise ValueError("stored trial without stored state")

    def __len__(self):
        return self.columns["trial_id"].size

    def __getitem__(self, name):
        return self.columns[name]

    def __eq__(self, other):
        if not isinstance(other, ClickDataset):
            return NotImplemented
        if (self.seed, self.config_text, self.params) != (other.seed, other.config_text, other.params):
            return False
        return all(np.array_equal(self[k], other[k], equal_nan=True) for k in FIELD_NAMES)

    @property
    def config(self):
        return load_config(self.config_text)

    def subset(self, mask):
        """New dataset with the rows selected by ``mask`` (bool or index)."""
        ds = ClickDataset({k: v[mask] for k, v in self.columns.items()},
                          self.config_text, self.params, self.seed)
        ds.meta = dict(self.meta)
        return ds

    def merge(self, other):
        """Union of two datasets from the same (config, params, seed)."""
        if (self.seed, self.config_text, self.params) != (other.seed, other.config_text, other.params):
            raise ValueError("datasets differ in config, parameters or seed")
        ids = np.concatenate([self["trial_id"], other["trial_id"]])
        order = np.argsort(ids, kind="stable")
        if np.any(np.diff(ids[order]) == 0):
            raise ValueError("datasets overlap in trial ids")
        cols = {k: np.concatenate([self[k], other[k]])[order] for k in FIELD_NAMES}
        return ClickDataset(cols, self.config_text, self.params, self.seed)

    # ---- records ------------------------------------------------------
    def record(self, i):
        c = self.columns
        p = self.params
        herald = (float(c["write_time"][i]), 0) if c["herald_click"][i] else None
        stored = c["stored_state"][i].copy() if c["stored"][i] else None
        readout = None
        if c["readout_click"][i]:
            b = p.bases[c["basis_index"][i]]
            readout = (float(c["readout_time"][i]), b[c["readout_outcome"][i]])
        return TrialRecord(
            trial_id=int(c["trial_id"][i]),
            input_polarization=PolarizationState.named(p.inputs[c["input_index"][i]]),
            basis=p.bases[c["basis_index"][i]],
            initial_state=INITIAL_STATES[c["initial"][i]],
            write_channel=WRITE_OUTCOMES[c["write_channel"][i]],
            herald_click=herald,
            stored_state=stored,
            readout_click=readout,
            terminal_channel=TERMINAL_CHANNELS[c["terminal"][i]],
        )

    @property
    def trials(self):
        return [self.record(i) for i in range(len(self))]

    # ---- persistence ------------------------------------------------------
    def header(self):
        return {"format": FORMAT, "version": FORMAT_VERSION, "seed": self.seed,
                "n_trials": len(self), "params": self.params.to_dict(),
                "config": self.config_text, "fields": list(FIELD_NAMES)}

    def dumps(self):
        """Line-delimited JSON: one header object, then one array per trial."""
        lines = [json.dumps(self.header(), sort_keys=True)]
        cols = [self.columns[k] for k in FIELD_NAMES]
        for i in range(len(self)):
            row = []
            for name, col in zip(FIELD_NAMES, cols):
                v = col[i]
                if name == "stored_state":
                    row.append([x for z in v for x in (z.real, z.imag)])
                elif name == "photon_stokes":
                    row.append([None if np.isnan(x) else float(x) for x in v])
                elif col.dtype.kind == "f":
                    row.append(None if np.isnan(v) else float(v))
                elif col.dtype.kind == "b":
                    row.append(bool(v))
                else:
                    row.append(int(v))
            lines.append(json.dumps(row))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text):
        lines = text.splitlines()
        if not lines:
            raise ValueError("empty dataset document")
        head = json.loads(lines[0])
        if head.get("format") != FORMAT:
            raise ValueError("not a click dataset")
        if tuple(head["fields"]) != FIELD_NAMES:
            raise ValueError("field order differs from this version")
        rows = [json.loads(line) for line in lines[1:] if line.strip()]
        cols = _empty_columns(len(rows))
        for j, name in enumerate(FIELD_NAMES):
            if name == "stored_state":
                arr = np.array([r[j] for r in rows], dtype=float).reshape(len(rows), 10)
                cols[name] = arr[:, 0::2] + 1j * arr[:, 1::2]
            else:
                vals = [r[j] for r in rows]
                if name == "photon_stokes":
                    vals = [[np.nan if x is None else x for x in v] for v in vals]
                elif cols[name].dtype.kind == "f":
                    vals = [np.nan if v is None else v for v in vals]
                cols[name] = np.array(vals, dtype=cols[name].dtype).reshape(cols[name].shape)
        return cls(cols, head["config"], TrialParams.from_dict(head["params"]), head["seed"])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.loads(fh.read())


# ---------------------------------------------------------------------------
# engine

@lru_cache(maxsize=8)
def _write_solver(config, pulse, drive, rate_factor):
    return WriteSolver(config, pulse, drive, rate_factor)


@lru_cache(maxsize=8)
def _readout_engine(config, pulse, step, rate_factor):
    return ReadoutEngine(config, pulse, step=step, rate_factor=rate_factor)


def assignments(trial_ids, params):
    """(input index, basis index) of each trial id."""
    ids = np.asarray(trial_ids, dtype=np.int64)
    nb = len(params.bases)
    return (ids // nb) % len(params.inputs), ids % nb


def _herald_chain(config, params):
    if params.herald_detection == "chain":
        return downstream(config.detection_chain)
    escape = config.kappa_1h / config.kappa_h
    eff = config.eta / escape
    if eff > 1:
        raise ScenarioError("lumped efficiency exceeds the cavity escape probability")
    return (("lumped", eff),)


def run_trials(config, params, n_trials, seed, first_trial=0):
    """Simulate trials ``first_trial .. first_trial + n_trials - 1``.

    Deterministic in ``(config, params, trial ids, seed)``; each trial uses
    only its own random stream, so disjoint id ranges can be merged.
    """
    if int(n_trials) < 1:
        raise ScenarioError("n_trials must be >= 1")
    if first_trial < 0:
        raise ScenarioError("first_trial must be non-negative")
    if not isinstance(params, TrialParams):
        raise ScenarioError("params must be TrialParams")
    ids = np.arange(first_trial, first_trial + int(n_trials), dtype=np.int64)
    n = ids.size
    rs = TrialStreams(seed, ids)
    cols = _empty_columns(n)
    cols["trial_id"] = ids
    inp, bas = assignments(ids, params)
    cols["input_index"], cols["basis_index"] = inp.astype("i1"), bas.astype("i1")
    for name in ("write_time", "storage_duration", "readout_time"):
        cols[name][:] = np.nan
    cols["photon_stokes"][:] = np.nan
    cols["herald_absorbed_by"][:] = -1
    cols["readout_absorbed_by"][:] = -1
    cols["readout_outcome"][:] = -1

    # preparation
    u0, u1 = rs.fixed(0), rs.fixed(1)
    in_f2 = u0 < config.prep_error_f2
    side = (~in_f2) & (u0 < config.prep_error_f2 + config.prep_error_f1)
    m0 = np.where(side, np.where(u1 < 0.5, -1, 1), 0)
    cols["initial"] = np.where(in_f2, 2, np.where(side, 1, 0)).astype("i1")
    stored = np.zeros((n, 5), dtype=complex)
    m_f2 = np.minimum((u1 * 5).astype(int), 4)
    stored[in_f2, m_f2[in_f2]] = 1.0

    # write
    solver = _write_solver(config, params.write, params.drive, params.rate_factor)
    channel = np.full(n, -1)
    scattered = np.zeros(n, dtype=bool)
    for mi in (-1, 0, 1):
        for k, label in enumerate(params.inputs):
            sel = np.nonzero((~in_f2) & (m0 == mi) & (inp == k))[0]
            if not sel.size:
                continue
            amp = solver.amplitudes(PolarizationState.named(label).vector, mi)
            out = solver.sample(amp, params.write.mean_photon_number, rs.fixed(2, sel),
                                rs.fixed(3, sel), rs.fixed(4, sel), params.statistics)
            channel[sel] = out["channel"]
            cols["write_time"][sel] = out["time"]
            stored[sel[out["transferred"]]] = out["stored"][out["transferred"]]
            scattered[sel] = out["scattered_f1"]
    heralded = channel >= 0
    heralded_ch = (channel == TERMINAL.index("herald_escape")) | (channel == TERMINAL.index("herald_internal"))
    wc = np.where(in_f2, 4, np.where(heralded_ch, 2, np.where(heralded, 3, np.where(scattered, 1, 0))))
    cols["write_channel"] = wc.astype("i1")
    cols["herald_emitted"] = channel == TERMINAL.index("herald_escape")
    hchain = _herald_chain(config, params)
    if len(hchain) > 4:
        raise ScenarioError("at most four herald chain elements after the mirror")
    hu = np.stack([rs.fixed(5 + j) for j in range(len(hchain))], axis=1) if hchain else np.zeros((n, 0))
    click, absorbed = apply_detection_chain(cols["herald_emitted"], hchain, hu)
    cols["herald_click"] = click
    cols["herald_absorbed_by"] = absorbed.astype("i1")
    has_atom = heralded | in_f2
    cols["stored"] = has_atom
    cols["stored_state"] = stored

    # storage
    t_read = params.write.duration + params.storage_time
    t_store = np.where(in_f2, 0.0, np.nan_to_num(cols["write_time"], nan=0.0))
    dur = np.where(has_atom, np.maximum(t_read - t_store, 0.0), np.nan)
    cols["storage_duration"] = dur
    idx = np.nonzero(has_atom)[0]
    terminal = np.select([in_f2, heralded_ch, heralded, scattered], [6, 3, 2, 1], 0)
    if params.read is not None and idx.size:
        noise = np.stack([rs.normal(9 + j, idx) for j in range(3)], axis=1)
        at_read = evolve_storage(stored[idx], config, dur[idx], noise=noise)
        engine = _readout_engine(config, params.read, params.read_step, params.rate_factor)
        first = np.array([basis_vectors(b)[0] for b in params.bases])[bas[idx]]
        res = engine.run(at_read, rs, idx, first)
        cols["readout_emitted"][idx] = res["emitted"]
        cols["readout_time"][idx] = res["time"]
        cols["photon_stokes"][idx] = res["stokes"]
        cols["readout_jumps"][idx] = res["n_jumps"]
        rchain = downstream(config.readout_chain)
        if len(rchain) > 4:
            raise ScenarioError("at most four read-out chain elements after the mirror")
        ru = np.stack([rs.fixed(12 + j, idx) for j in range(len(rchain))], axis=1) \
            if rchain else np.zeros((idx.size, 0))
        rclick, rabs = apply_detection_chain(res["emitted"], rchain, ru)
        cols["readout_click"][idx] = rclick
        cols["readout_absorbed_by"][idx] = rabs
        cols["readout_outcome"][idx] = np.where(rclick, res["outcome"], -1)
        terminal[idx] = np.where(res["emitted"], 4, 5)
    cols["terminal"] = terminal.astype("i1")
    return ClickDataset(cols, emit_config(config), params, seed)
