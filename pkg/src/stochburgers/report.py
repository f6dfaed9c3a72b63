"""CSV reports and run manifests.

Reports are RFC 4180 CSV (CRLF line ends, minimal quoting) with a header row.
Floats are written with 17 significant digits, so reading a report back
reproduces every value bit for bit.  Booleans are written ``true``/``false``.
The manifest is sorted JSON without timestamps or absolute paths, so a rerun
with the same configuration reproduces it byte for byte.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

__all__ = ["format_value", "parse_value", "write_report", "read_report", "file_digest", "ReportEntry",
           "RunManifest"]


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def parse_value(text: str):
    """Inverse of :func:`format_value` for the types it writes."""
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass(frozen=True)
class ReportEntry:
    name: str
    sha256: str
    n_rows: int


def write_report(records: Iterable[dict], path, columns: list[str] | None = None) -> ReportEntry:
    """Write ``records`` (dicts sharing one key set) as CSV and return its digest.

    ``columns`` fixes the header; it is required for an empty record set.
    Missing keys are written as empty fields.
    """
    records = list(records)
    if columns is None:
        if not records:
            raise ValueError("columns are required for an empty report")
        columns = list(records[0])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(columns)
    for r in records:
        writer.writerow([format_value(r.get(c)) for c in columns])
    data = buf.getvalue().encode("utf-8")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc}") from exc
    return ReportEntry(path.name, hashlib.sha256(data).hexdigest(), len(records))


def read_report(path) -> tuple[list[str], list[dict]]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [{c: parse_value(v) for c, v in zip(header, line)} for line in reader]
    return header, rows


def _plain(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        # shortest round-trip repr; JSON has no NaN or infinity
        return float(v) if math.isfinite(v) else format_value(v)
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


@dataclass
class RunManifest:
    """Config snapshot, code version, per-suite results and output digests of one run."""

    command: str
    config: dict
    version: str
    suites: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def add_output(self, entry: ReportEntry) -> None:
        self.outputs[entry.name] = entry.sha256

    def add_suite(self, name: str, passed: bool, **details) -> None:
        self.suites[name] = bool(passed)
        if details:
            self.details[name] = details

    @property
    def passed(self) -> bool:
        return all(self.suites.values())

    def to_json(self) -> str:
        doc = {"command": self.command, "config": _plain(self.config), "version": self.version,
               "suites": _plain(self.suites), "outputs": self.outputs, "details": _plain(self.details),
               "passed": self.passed}
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def write(self, path) -> str:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = self.to_json().encode("utf-8")
        path.write_bytes(data)
        return hashlib.sha256(data).hexdigest()

    @classmethod
    def load(cls, path) -> "RunManifest":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(doc["command"], doc["config"], doc["version"], doc["suites"], doc["outputs"],
                   doc.get("details", {}))
