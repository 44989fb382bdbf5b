import json

import numpy as np
import pytest

from heraldmem.report import comparison_line, emit_report, emit_report_json, plain
from heraldmem.results import ScanResult
from heraldmem.scenarios import Bundle, Comparison


def _bundle():
    b = Bundle("demo", 3, 100)
    b.check("kappa", 31.71, 31.7, 0.005, "rel", "MHz")
    b.check("radius", 7.5, 6.5, 0.03, "rel", "um")
    b.check("ratio", 1.9, (1.5, 2.5), mode="range")
    b.check("pattern", np.bool_(True), True, mode="true")
    b.values["fidelity"] = (0.947, 0.002)
    b.values["clicks"] = np.int64(528)
    b.scans["curve"] = ScanResult([0.0, 1.0], [0.5, 0.6], [0.01, 0.01])
    return b


def test_exactly_one_fail_line():
    text = emit_report(_bundle())
    assert sum(line.strip().startswith("FAIL") for line in text.splitlines()) == 1
    assert "FAIL  radius" in text
    assert "3/4 passed" in text


def test_line_formats():
    assert comparison_line(Comparison("k", 31.71, 31.7, 0.005, "rel", "MHz")) == \
        "PASS  k: computed 31.71 MHz, target 31.7 MHz, tolerance +/- 0.5 %"
    assert comparison_line(Comparison("r", 3.0, (1.5, 2.5), mode="range")) == \
        "FAIL  r: computed 3, target [1.5, 2.5], tolerance within range"
    assert comparison_line(Comparison("p", 1.75, 1.7, 0.1, "abs", "mrad")).endswith("+/- 0.1 mrad")
    assert not Comparison("nan", float("nan"), 1.0, 1.0).passed


def test_output_is_deterministic():
    assert emit_report(_bundle()) == emit_report(_bundle())
    assert emit_report_json(_bundle()) == emit_report_json(_bundle())


def test_empty_sections_omitted():
    b = Bundle("demo", 0, 1)
    b.values["x"] = 1.0
    text = emit_report(b)
    assert "values:" in text
    for head in ("comparisons:", "artifacts:", "notes:"):
        assert head not in text


def test_empty_bundle_raises():
    with pytest.raises(ValueError):
        emit_report(Bundle("demo", 0, 1))


def test_json_report_is_plain():
    d = json.loads(emit_report_json(_bundle()))
    assert [c["passed"] for c in d["comparisons"]] == [True, False, True, True]
    assert d["values"]["clicks"] == 528
    assert d["comparisons"][2]["target"] == [1.5, 2.5]
    assert plain({"a": np.array([1.0, np.inf]), "b": 1 + 2j}) == {"a": [1.0, "inf"], "b": [1.0, 2.0]}
