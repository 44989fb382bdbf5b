"""Plain-text and JSON summaries of a scenario bundle.

Output is a pure function of the bundle: numbers are printed with fixed
precision, sections and keys keep their insertion order, empty sections
are left out.
"""

import json
import math

import numpy as np


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "yes" if v else "no"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6g}"
    if isinstance(v, tuple) and len(v) == 2 and all(isinstance(x, (float, np.floating)) for x in v):
        return f"{_fmt(v[0])} +/- {_fmt(v[1])}"
    if isinstance(v, (tuple, list)):
        return "(" + ", ".join(_fmt(x) for x in v) + ")"
    return str(v)


def _tolerance(c):
    if c.mode == "abs":
        return f"+/- {_fmt(c.tolerance)}" + (f" {c.unit}" if c.unit else "")
    if c.mode == "rel":
        return f"+/- {_fmt(100 * c.tolerance)} %"
    return {"le": "<= target", "ge": ">= target", "range": "within range",
            "true": "must hold"}[c.mode]


def comparison_line(c):
    unit = f" {c.unit}" if c.unit else ""
    status = "PASS" if c.passed else "FAIL"
    if c.mode == "range":
        target = f"[{_fmt(c.target[0])}, {_fmt(c.target[1])}]{unit}"
    else:
        target = f"{_fmt(c.target)}{unit}"
    return (f"{status}  {c.label}: computed {_fmt(c.computed)}{unit}, "
            f"target {target}, tolerance {_tolerance(c)}")


def emit_report(bundle):
    """Human-readable summary of a :class:`~heraldmem.scenarios.Bundle`."""
    if not (bundle.comparisons or bundle.values or bundle.scans or bundle.documents):
        raise ValueError("bundle has no results")
    lines = [f"scenario: {bundle.scenario}", f"seed: {bundle.seed}",
             f"trials: {bundle.n_trials}"]
    if bundle.comparisons:
        lines += ["", "comparisons:"]
        lines += ["  " + comparison_line(c) for c in bundle.comparisons]
        n_ok = len(bundle.comparisons) - bundle.n_failed
        lines.append(f"  {n_ok}/{len(bundle.comparisons)} passed")
    if bundle.values:
        lines += ["", "values:"]
        lines += [f"  {k}: {_fmt(v)}" for k, v in bundle.values.items()]
    if bundle.scans or bundle.documents:
        lines += ["", "artifacts:"]
        lines += [f"  scan {k} ({len(s)} points)" for k, s in bundle.scans.items()]
        lines += [f"  document {k}" for k in bundle.documents]
    if bundle.notes:
        lines += ["", "notes:"]
        lines += [f"  - {n}" for n in bundle.notes]
    return "\n".join(lines) + "\n"


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def report_dict(bundle):
    """JSON-ready form of the summary (same content as :func:`emit_report`)."""
    d = {"scenario": bundle.scenario, "seed": bundle.seed, "trials": bundle.n_trials}
    if bundle.comparisons:
        d["comparisons"] = [{"label": c.label, "computed": _plain(c.computed),
                             "target": _plain(c.target), "tolerance": _plain(c.tolerance),
                             "mode": c.mode, "unit": c.unit, "passed": bool(c.passed)}
                            for c in bundle.comparisons]
    if bundle.values:
        d["values"] = _plain(bundle.values)
    if bundle.notes:
        d["notes"] = list(bundle.notes)
    return d


def emit_report_json(bundle):
    return json.dumps(report_dict(bundle), indent=2) + "\n"


def plain(obj):
    """Recursively convert numpy scalars and arrays for ``json.dumps``."""
    return _plain(obj)
