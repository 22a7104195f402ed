"""Run reports: versioned JSON, separate timing, CSV traces."""
import csv
import json
import math
import os

import numpy as np

SCHEMA_VERSION = 1
VERDICTS = ("PASS", "FAIL", "CAVEAT", "INCONCLUSIVE")

# module-level outcomes that are not report verdicts
_MAP = {"CONSISTENT": "PASS", "VIOLATION": "FAIL", "HYPOTHESIS-VIOLATED": "INCONCLUSIVE"}


def normalize_verdict(v):
    v = _MAP.get(v, v)
    if v not in VERDICTS:
        raise ValueError(f"unknown verdict {v!r}")
    return v


def overall(checks):
    vs = {c["verdict"] for c in checks}
    if not checks:
        return "INCONCLUSIVE"
    for v in ("FAIL", "INCONCLUSIVE", "CAVEAT"):
        if v in vs:
            return v
    return "PASS"


def make_check(name, verdict, tolerance, **data):
    if tolerance is None:
        raise ValueError(f"check {name!r} has no tolerance")
    out = {"name": name, "verdict": normalize_verdict(verdict), "tolerance": tolerance}
    if verdict != out["verdict"]:
        out["outcome"] = verdict
    out.update(data)
    return out


def plain(obj):
    """JSON-ready copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return plain(obj.to_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj):
    return json.dumps(plain(obj), sort_keys=True, indent=1)


class Report:
    """Accumulates checks, results and trace files for one command run."""

    def __init__(self, command, config_echo, seed, out_dir):
        self.command = command
        self.config = config_echo
        self.seed = seed
        self.out_dir = out_dir
        self.checks = []
        self.results = {}
        self.traces = []
        self.timing = {}

    def check(self, name, verdict, tolerance, **data):
        c = make_check(name, verdict, tolerance, **data)
        self.checks.append(c)
        return c

    def trace(self, name, header, rows):
        """Write a CSV trace into the output directory and reference it."""
        os.makedirs(self.out_dir, exist_ok=True)
        with open(os.path.join(self.out_dir, name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        self.traces.append(name)

    @property
    def verdict(self):
        return overall(self.checks)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "verdict": self.verdict,
            "checks": self.checks,
            "results": self.results,
            "artifacts": {"timing": "timing.json", "traces": sorted(self.traces)},
        }

    def write(self):
        os.makedirs(self.out_dir, exist_ok=True)
        path = os.path.join(self.out_dir, "report.json")
        with open(path, "w") as fh:
            fh.write(dumps(self.to_dict()) + "\n")
        with open(os.path.join(self.out_dir, "timing.json"), "w") as fh:
            fh.write(dumps({"command": self.command, "seconds": self.timing}) + "\n")
        return path

    @property
    def exit_code(self):
        return 1 if any(c["verdict"] == "FAIL" for c in self.checks) else 0
