"""Python bindings for the gmmusim GPU memory-hierarchy simulator."""

import csv
import io
import json

from ._core import (
    ConfigError,
    DivisionDomain,
    SimError,
    SyntheticSpec,
    csv_columns,
    designs,
    generate,
    load_trace,
    trace_bytes,
    unfairness,
    validate_file,
    weighted_speedup,
    write_trace,
)
from . import _core

__all__ = [
    "ConfigError",
    "DivisionDomain",
    "SimError",
    "SyntheticSpec",
    "csv_columns",
    "designs",
    "generate",
    "load_trace",
    "run",
    "run_text",
    "trace_bytes",
    "unfairness",
    "validate_file",
    "weighted_speedup",
    "write_trace",
]


class Result:
    def __init__(self, raw):
        self.csv = raw["csv"]
        self.report = json.loads(raw["report"])

    @property
    def rows(self):
        return list(csv.DictReader(io.StringIO(self.csv)))


def run(path):
    """Run the experiment config at `path`."""
    return Result(_core.run_file(path))


def run_text(text):
    """Run an experiment described by config text (trace paths resolve against the cwd)."""
    return Result(_core.run_text(text))
