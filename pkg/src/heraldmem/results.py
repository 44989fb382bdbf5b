"""Labelled (x, estimate, sigma) tables and their CSV/JSON round trip."""

from dataclasses import dataclass, field
import csv
import io
import json

import numpy as np


@dataclass
class ScanResult:
    x: np.ndarray
    estimate: np.ndarray
    sigma: np.ndarray
    label: str = ""
    x_name: str = "x"
    x_unit: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.estimate = np.asarray(self.estimate, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if not (self.x.shape == self.estimate.shape == self.sigma.shape):
            raise ValueError("x, estimate and sigma must have equal lengths")
        if np.any(self.sigma < 0):
            raise ValueError("sigma must be non-negative")

    def __len__(self):
        return self.x.size

    def to_csv(self, path=None, x_scale=1.0, x_column=None):
        """Write ``# key: value`` metadata lines followed by x,estimate,sigma."""
        buf = io.StringIO()
        buf.write(f"# label: {self.label}\n")
        buf.write(f"# x: {self.x_name} [{self.x_unit}]\n")
        for k in sorted(self.meta):
            buf.write(f"# {k}: {json.dumps(self.meta[k], sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([x_column or self.x_name, "estimate", "sigma"])
        for a, b, c in zip(self.x, self.estimate, self.sigma):
            w.writerow([repr(float(a * x_scale)), repr(float(b)), repr(float(c))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text):
        meta, rows, label, x_name, x_unit = {}, [], "", "x", ""
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(": ")
                if key == "label":
                    label = val
                elif key == "x":
                    x_name, _, unit = val.partition(" [")
                    x_unit = unit.rstrip("]")
                else:
                    meta[key] = json.loads(val)
            elif line and not line[0].isalpha():
                rows.append([float(v) for v in line.split(",")])
        arr = np.array(rows, dtype=float).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], label, x_name, x_unit, meta)

    def to_dict(self):
        return {
            "label": self.label,
            "x_name": self.x_name,
            "x_unit": self.x_unit,
            "x": self.x.tolist(),
            "estimate": self.estimate.tolist(),
            "sigma": self.sigma.tolist(),
            "meta": self.meta,
        }
