"""Estimators over click datasets.

Histograms, photon correlations, herald conditioning, transfer and
heralding probabilities, read-out truncation and per-atom aggregation.
All functions are pure; results come back as :class:`ScanResult` or small
named tuples.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats as sps

from .config import AXIAL_INPUTS, BASES
from .results import ScanResult
from .storage import coherent_conversions


class EstimationError(ValueError):
    """Raised when an estimator has no data to work with."""


# ---------------------------------------------------------------------------
# click streams

@dataclass(frozen=True)
class ClickStream:
    """Detector clicks tagged with the trial that produced them."""

    trial_ids: np.ndarray
    times: np.ndarray
    n_trials: int

    def __post_init__(self):
        ids = np.asarray(self.trial_ids, dtype=np.int64)
        t = np.asarray(self.times, dtype=float)
        if ids.shape != t.shape:
            raise ValueError("trial_ids and times must have equal length")
        object.__setattr__(self, "trial_ids", ids)
        object.__setattr__(self, "times", t)

    def __len__(self):
        return self.times.size

    def thin(self, efficiency, rng=None):
        """Keep each click independently with probability ``efficiency``."""
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        keep = rng.random(len(self)) < efficiency
        return ClickStream(self.trial_ids[keep], self.times[keep], self.n_trials)


_STREAMS = {
    "herald": ("herald_click", "write_time"),
    "herald_emitted": ("herald_emitted", "write_time"),
    "readout": ("readout_click", "readout_time"),
    "readout_emitted": ("readout_emitted", "readout_time"),
}


def select_stream(dataset, selector):
    """Click stream of a dataset: a name in ``herald``, ``herald_emitted``,
    ``readout``, ``readout_emitted``, or a callable ``dataset -> ClickStream``."""
    if isinstance(dataset, ClickStream):
        return dataset
    if callable(selector):
        return selector(dataset)
    try:
        flag, tcol = _STREAMS[selector]
    except KeyError:
        raise ValueError(f"unknown stream selector {selector!r}") from None
    m = np.asarray(dataset[flag], dtype=bool)
    return ClickStream(dataset["trial_id"][m], dataset[tcol][m], len(dataset))


def histogram(dataset, selector="herald", bin_width=10e-9, t_max=None):
    """Clicks per trial and time bin.

    Returns a :class:`ScanResult` with bin centres (s), counts divided by the
    number of trials, and Poisson errors.
    """
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    s = select_stream(dataset, selector)
    if s.n_trials == 0:
        raise EstimationError("empty dataset")
    if t_max is None:
        t_max = s.times.max() if len(s) else bin_width
    n_bins = max(1, int(np.ceil(t_max / bin_width)))
    edges = np.arange(n_bins + 1) * bin_width
    counts, _ = np.histogram(s.times, bins=edges)
    # clicks exactly at or beyond the last edge land in the last bin
    counts[-1] += np.count_nonzero(s.times > edges[-1])
    return ScanResult(0.5 * (edges[:-1] + edges[1:]), counts / s.n_trials,
                      np.sqrt(counts) / s.n_trials, label=f"histogram:{selector}",
                      x_name="time", x_unit="s", meta={"n_trials": int(s.n_trials)})


def g2(dataset, selector="herald", max_lag=1e-6, bin_width=20e-9):
    """Second-order correlation versus lag, normalised across trials.

    Same-trial coincidences per trial are divided by the coincidences per
    pair of distinct trials, which for independent trials is the
    uncorrelated baseline.  Lags without any cross-trial coincidence are
    omitted.
    """
    if bin_width <= 0 or max_lag <= 0:
        raise ValueError("bin width and max lag must be positive")
    s = select_stream(dataset, selector)
    if len(s) < 2:
        raise EstimationError("g2 needs at least two clicks")
    if s.n_trials < 2:
        raise EstimationError("g2 needs at least two trials")
    k_max = int(np.floor(max_lag / bin_width + 0.5))
    b = np.floor(s.times / bin_width + 0.5).astype(np.int64)
    b -= b.min()
    h = np.bincount(b)
    lags = np.arange(-k_max, k_max + 1)
    full = np.correlate(h, h, mode="full")  # index len(h)-1 is lag 0
    mid = h.size - 1
    all_pairs = np.array([full[mid + k] if abs(k) <= mid else 0 for k in lags], dtype=float)
    all_pairs[lags == 0] -= len(s)  # drop self pairs
    same = np.zeros(lags.size)
    order = np.argsort(s.trial_ids, kind="stable")
    ids, bb = s.trial_ids[order], b[order]
    starts = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]])
    ends = np.r_[starts[1:], ids.size]
    for a, e in zip(starts, ends):
        if e - a < 2:
            continue
        d = bb[a:e, None] - bb[None, a:e]
        d = d[~np.eye(e - a, dtype=bool)]
        d = d[np.abs(d) <= k_max]
        np.add.at(same, d + k_max, 1)
    cross = all_pairs - same
    n = s.n_trials
    ok = cross > 0
    norm = cross[ok] / (n * (n - 1.0))
    est = same[ok] / n / norm
    sig = np.sqrt(np.maximum(same[ok], 1.0)) / n / norm
    return ScanResult(lags[ok] * bin_width, est, sig, label=f"g2:{selector}", x_name="lag",
                      x_unit="s", meta={"n_trials": int(n), "n_clicks": int(len(s))})


def condition_on_herald(dataset):
    """Trials with a herald click; ``meta['retained_fraction']`` records the share."""
    mask = np.asarray(dataset["herald_click"], dtype=bool)
    sub = dataset.subset(mask)
    sub.meta["retained_fraction"] = float(mask.mean()) if len(dataset) else 0.0
    return sub


# ---------------------------------------------------------------------------
# Bernoulli statistics

class BernoulliCI(NamedTuple):
    p: float
    sigma: float
    degenerate: bool


def bernoulli_ci(n_parallel, n_perpendicular):
    """Normal-approximation 68 % interval of a Bernoulli success fraction."""
    if n_parallel < 0 or n_perpendicular < 0:
        raise ValueError("counts must be non-negative")
    n = n_parallel + n_perpendicular
    if n < 1:
        raise EstimationError("zero total counts")
    p = n_parallel / n
    return BernoulliCI(p, float(np.sqrt(p * (1.0 - p) / n)), p in (0.0, 1.0))


def _one_sided_upper(n):
    # 68 % upper limit for zero successes in n trials
    return 1.0 - 0.32 ** (1.0 / n)


def binomial_fraction(k, n):
    """(p, sigma) of k successes in n; one-sided limit as sigma when k = 0."""
    if n < 1:
        raise EstimationError("zero trials")
    p = k / n
    if k == 0:
        return 0.0, _one_sided_upper(n)
    return p, float(np.sqrt(p * (1 - p) / n))


# ---------------------------------------------------------------------------
# tomography counts

@dataclass(frozen=True)
class CountTable:
    """Counts ``N[i, b, o]`` for input ``i``, basis ``b`` and outcome ``o``.

    ``inputs`` label the first axis (subset of R, L, H, V, D, A); the
    bases are always RL, HV, DA and outcome 0 is the first letter.
    """

    counts: np.ndarray
    inputs: tuple = AXIAL_INPUTS

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=float)
        if c.shape != (len(self.inputs), 3, 2):
            raise ValueError("counts must have shape (n_inputs, 3, 2)")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_dataset(cls, dataset, max_time=None):
        """Read-out clicks binned by input, basis and outcome."""
        p = dataset.params
        if tuple(p.bases) != BASES:
            raise ValueError("tomography needs all three bases")
        c = np.zeros((len(p.inputs), 3, 2))
        m = np.asarray(dataset["readout_click"], dtype=bool)
        if max_time is not None:
            m = m & (dataset["readout_time"] <= max_time)
        np.add.at(c, (dataset["input_index"][m], dataset["basis_index"][m],
                      dataset["readout_outcome"][m]), 1)
        return cls(c, tuple(p.inputs))

    @property
    def grid(self):
        """6 x 6 view: rows inputs, columns outcome states R, L, H, V, D, A."""
        return self.counts.reshape(len(self.inputs), 6)

    @property
    def total(self):
        return float(self.counts.sum())

    def parallel(self, i):
        """(N_par, N_perp) for input ``i`` in the basis containing it."""
        label = self.inputs[i]
        b = next(k for k, bs in enumerate(BASES) if label in bs)
        o = BASES[b].index(label)
        return self.counts[i, b, o], self.counts[i, b, 1 - o]

    def __add__(self, other):
        if self.inputs != other.inputs:
            raise ValueError("input labels differ")
        return CountTable(self.counts + other.counts, self.inputs)


def count_fidelities(table):
    """Per-input fidelity estimates N_par/(N_par+N_perp) with Bernoulli errors.

    Returns (p array, sigma array, average, sigma of average).
    """
    ps, ss = [], []
    for i in range(len(table.inputs)):
        a, b = table.parallel(i)
        ci = bernoulli_ci(a, b)
        ps.append(ci.p)
        ss.append(ci.sigma)
    ps, ss = np.array(ps), np.array(ss)
    return ps, ss, float(ps.mean()), float(np.sqrt(np.sum(ss ** 2)) / ps.size)


# ---------------------------------------------------------------------------
# probabilities

class ProbabilityEstimate(NamedTuple):
    p_t_nbar: float
    p_t_nbar_sigma: float
    p_h_nbar: float
    p_h_nbar_sigma: float
    p_s: float
    p_s_sigma: float
    p_h1: float
    p_h1_sigma: float
    p_t_readout: float
    p_t_readout_sigma: float


def estimate_probabilities(dataset, reference, n_mean=None):
    """Transfer and heralding probabilities from a weak and a reference run.

    ``p_t,n`` is the herald rate of ``dataset`` divided by that of
    ``reference``, whose strong pulse is taken to transfer the atom with
    certainty.  ``p_H,n`` is the herald rate itself.  Single-photon values
    follow from the Poissonian conversions.  The read-out rate ratio gives
    an independent ``p_t,n`` when both datasets contain read-out.
    Uncertainties are binomial, propagated to first order.
    """
    n_mean = dataset.params.write.mean_photon_number if n_mean is None else n_mean
    n, n_ref = len(dataset), len(reference)
    if n == 0:
        raise EstimationError("empty dataset")
    k = int(np.count_nonzero(dataset["herald_click"]))
    k_ref = int(np.count_nonzero(reference["herald_click"]))
    if k_ref == 0:
        raise EstimationError("reference dataset has no herald clicks")
    p_h, s_h = binomial_fraction(k, n)
    r_ref, s_ref = binomial_fraction(k_ref, n_ref)
    p_t = p_h / r_ref
    s_t = p_t * np.hypot(s_h / p_h, s_ref / r_ref) if k else s_h / r_ref
    if k == 0:
        p_s = p_h1 = 0.0
        s_s = s_t / n_mean
        s_h1 = s_h / n_mean
    else:
        conv = coherent_conversions(n_mean, p_t_nbar=min(p_t, 1 - 1e-12), p_h_nbar=p_h)
        p_s, p_h1 = conv["p_s"], conv["p_h1"]
        # d p_s / d p_t = 1 / (n (1 - p_t))
        s_s = s_t / (n_mean * (1.0 - p_t))
        s_h1 = p_h1 * np.hypot(s_h / p_h, _dlog_h1(p_t) * s_t)
    kr = int(np.count_nonzero(dataset["readout_click"]))
    kr_ref = int(np.count_nonzero(reference["readout_click"]))
    if kr_ref:
        pr, sr = binomial_fraction(kr, n)
        rr, srr = binomial_fraction(kr_ref, n_ref)
        p_tr = pr / rr
        s_tr = p_tr * np.hypot(sr / pr, srr / rr) if kr else sr / rr
    else:
        p_tr = s_tr = float("nan")
    return ProbabilityEstimate(p_t, s_t, p_h, s_h, p_s, s_s, p_h1, s_h1, p_tr, s_tr)


def _dlog_h1(p_t):
    # d/dp_t of log(-ln(1-p_t)/p_t)
    L = -np.log1p(-p_t)
    return 1.0 / ((1.0 - p_t) * L) - 1.0 / p_t


def reference_saturated(reference, stronger, n_sigma=3.0):
    """True when herald rates of two reference runs agree within ``n_sigma``."""
    a, sa = binomial_fraction(int(np.count_nonzero(reference["herald_click"])), len(reference))
    b, sb = binomial_fraction(int(np.count_nonzero(stronger["herald_click"])), len(stronger))
    return abs(a - b) <= n_sigma * np.hypot(sa, sb)


# ---------------------------------------------------------------------------
# truncation

def expected_fidelities(dataset, mask=None):
    """Per-trial fidelity ``(1 + s_in . s_photon) / 2`` of emitted read-out photons.

    Uses the simulated photon polarisation (``photon_stokes``) instead of a
    detector outcome, which removes the projection noise of a single click.
    Rows without an emitted photon are NaN.
    """
    from .config import PolarizationState
    s_in = np.array([PolarizationState.named(lab).stokes() for lab in dataset.params.inputs])
    f = 0.5 * (1.0 + np.sum(s_in[dataset["input_index"]] * dataset["photon_stokes"], axis=1))
    f = np.where(dataset["readout_emitted"], f, np.nan)
    return f if mask is None else f[mask]


def truncation_sweep(dataset, cuts, estimator="counts", stream="readout"):
    """Average fidelity and relative efficiency versus read-out cut time.

    Only photons with ``readout_time <= cut`` are kept.  ``estimator``
    ``counts`` uses detector outcomes (:func:`count_fidelities`);
    ``expected`` averages :func:`expected_fidelities`.  ``stream`` is
    ``readout`` (detector clicks) or ``readout_emitted`` (photons leaving
    the cavity; the detection chain is polarisation independent, so this
    only removes thinning noise).  Returns the pair (fidelity, relative
    efficiency) as :class:`ScanResult`.
    """
    cuts = np.atleast_1d(np.asarray(cuts, dtype=float))
    read = dataset.params.read
    if read is None:
        raise ValueError("dataset has no read-out")
    if estimator not in ("counts", "expected"):
        raise ValueError("estimator must be 'counts' or 'expected'")
    if stream not in ("readout", "readout_emitted"):
        raise ValueError("stream must be 'readout' or 'readout_emitted'")
    if estimator == "counts" and stream != "readout":
        raise ValueError("count fidelities need detector clicks")
    flag = "readout_click" if stream == "readout" else "readout_emitted"
    sel = np.asarray(dataset[flag], dtype=bool)
    if not sel.any():
        raise EstimationError("no read-out clicks")
    # every click is an emitted photon, so the emission window bounds both streams
    emitted = np.asarray(dataset["readout_emitted"], dtype=bool)
    window = float(np.nanmax(dataset["readout_time"][emitted | sel]))
    limit = max(window, read.duration)
    if np.any(cuts <= 0) or np.any(cuts > limit * (1 + 1e-12)):
        raise ValueError("cut times must lie inside the read-out window")
    total = int(np.count_nonzero(sel))
    times = dataset["readout_time"]
    fexp = expected_fidelities(dataset) if estimator == "expected" else None
    f, fs, e, es = [], [], [], []
    for c in cuts:
        keep = sel & (times <= c)
        kept = int(np.count_nonzero(keep))
        if estimator == "expected":
            if kept == 0:
                f.append(np.nan)
                fs.append(0.0)
            else:
                v = fexp[keep]
                f.append(float(v.mean()))
                fs.append(float(v.std(ddof=1) / np.sqrt(kept)) if kept > 1 else 0.0)
        else:
            table = CountTable.from_dataset(dataset, max_time=c)
            if kept == 0 or any(sum(table.parallel(i)) == 0 for i in range(len(table.inputs))):
                f.append(np.nan)
                fs.append(0.0)
            else:
                _, _, avg, s = count_fidelities(table)
                f.append(avg)
                fs.append(s)
        p, s = binomial_fraction(kept, total)
        e.append(p)
        es.append(s)
    meta = {"estimator": estimator, "stream": stream, "n_photons": total}
    return (ScanResult(cuts, f, fs, label="fidelity_vs_cut", x_name="cut", x_unit="s", meta=meta),
            ScanResult(cuts, e, es, label="relative_efficiency_vs_cut", x_name="cut", x_unit="s",
                       meta=dict(meta)))


# ---------------------------------------------------------------------------
# per-atom aggregation

def aggregate_atoms(per_atom, mode="closed_form", rng=None):
    """Combine per-atom (mean, sigma, weight) into one (mean, sigma).

    ``closed_form``: weighted mean and total variance (between- plus
    within-atom).  ``monte_carlo``: draw ``weight`` samples per atom from
    N(mean, sigma^2) (weights rounded to integers) and fit a normal
    distribution to the pooled samples.
    """
    arr = np.asarray(per_atom, dtype=float).reshape(-1, 3)
    if arr.shape[0] < 1:
        raise ValueError("need at least one atom")
    mu, sig, w = arr.T
    if np.any(sig < 0) or np.any(w < 0):
        raise ValueError("sigmas and weights must be non-negative")
    if w.sum() <= 0:
        raise EstimationError("zero total weight")
    if mode == "closed_form":
        m = float(np.sum(w * mu) / w.sum())
        var = float(np.sum(w * (sig ** 2 + (mu - m) ** 2)) / w.sum())
        return m, float(np.sqrt(var))
    if mode == "monte_carlo":
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        counts = np.rint(w).astype(int)
        if counts.sum() < 2:
            raise EstimationError("monte_carlo mode needs at least two samples")
        samples = np.concatenate([rng.normal(a, b, size=k) for a, b, k in zip(mu, sig, counts)])
        loc, scale = sps.norm.fit(samples)
        return float(loc), float(scale)
    raise ValueError("mode must be 'closed_form' or 'monte_carlo'")
