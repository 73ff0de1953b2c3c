"""File formats: field/density snapshots, observable series, reports.

Snapshot layout: one JSON header line terminated by a newline, then raw
little-endian IEEE-754 float64 payload in row-major order -- (Re, Im) pairs
for complex fields, one value per point for density images. Observable
series are plain CSV. Reports and manifests are JSON.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .fields import ComplexField2D, DensityImage, Grid2D
from .measurement import MeasurementReport

OBSERVABLE_COLUMNS = [
    "t", "norm", "energy", "mu", "p1p", "p1m", "p3p", "p3m",
    "re_coh", "im_coh", "node_angle",
]


class FormatError(RuntimeError):
    pass


def _header(grid: Grid2D, time: float, kind: str, meta: dict | None) -> bytes:
    h = {
        "kind": kind,
        "nx": grid.nx, "ny": grid.ny,
        "extent_x": grid.extent_x, "extent_y": grid.extent_y,
        "time": time,
    }
    if meta:
        h.update(meta)
    return (json.dumps(h, sort_keys=True) + "\n").encode()


def save_field(path, psi: ComplexField2D, meta: dict | None = None):
    buf = np.empty((psi.grid.nx, psi.grid.ny, 2), dtype="<f8")
    buf[..., 0] = psi.values.real
    buf[..., 1] = psi.values.imag
    with open(path, "wb") as fh:
        fh.write(_header(psi.grid, psi.time, "field", meta))
        fh.write(buf.tobytes())


def save_density(path, img: DensityImage, meta: dict | None = None):
    with open(path, "wb") as fh:
        fh.write(_header(img.grid, img.time, "density", meta))
        fh.write(np.ascontiguousarray(img.values, dtype="<f8").tobytes())


def _read_header(fh):
    line = fh.readline()
    try:
        return json.loads(line.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad snapshot header: {exc}") from exc


def load_snapshot(path):
    """Load a field or density snapshot; returns ComplexField2D or DensityImage."""
    with open(path, "rb") as fh:
        h = _read_header(fh)
        grid = Grid2D(h["nx"], h["ny"], h["extent_x"], h["extent_y"])
        raw = fh.read()
    n = h["nx"] * h["ny"]
    if h.get("kind") == "field":
        arr = np.frombuffer(raw, dtype="<f8", count=2 * n).reshape(h["nx"], h["ny"], 2)
        vals = arr[..., 0] + 1j * arr[..., 1]
        out = ComplexField2D(grid, vals, time=h["time"])
    elif h.get("kind") == "density":
        vals = np.frombuffer(raw, dtype="<f8", count=n).reshape(h["nx"], h["ny"])
        out = DensityImage(grid, vals.copy(), time=h["time"])
    else:
        raise FormatError(f"unknown snapshot kind {h.get('kind')!r}")
    out.meta = {k: v for k, v in h.items()
                if k not in ("kind", "nx", "ny", "extent_x", "extent_y", "time")}
    return out


class ObservableWriter:
    """Streams observable records to CSV with the canonical column order."""

    def __init__(self, path, columns=None):
        self.path = path
        self.columns = list(columns or OBSERVABLE_COLUMNS)
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(self.columns)

    def __call__(self, record: dict):
        self._w.writerow([repr(record.get(c, "")) if isinstance(record.get(c), float)
                          else record.get(c, "") for c in self.columns])

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_observables(path) -> dict:
    """Read an observable CSV into a dict of float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    cols = rows[0]
    data = {c: [] for c in cols}
    for row in rows[1:]:
        for c, v in zip(cols, row):
            data[c].append(float(v) if v != "" else np.nan)
    return {c: np.array(v) for c, v in data.items()}


def save_measurement_report(path, report: MeasurementReport,
                            input_files=None):
    doc = asdict(report)
    doc["format"] = "ringbec-measurement-report-1"
    if input_files:
        doc["input_digests"] = {
            os.path.basename(str(p)): file_digest(p) for p in input_files
        }
    _atomic_write_json(path, doc)


def load_measurement_report(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "ringbec-measurement-report-1":
        raise FormatError("not a measurement report file")
    return doc


def save_sensing_record(path, estimate, extra: dict | None = None):
    doc = {
        "format": "ringbec-sensing-estimate-1",
        "kind": estimate.kind,
        "value": estimate.value,
        "standard_error": estimate.standard_error,
        "inputs_digest": estimate.inputs_digest,
        "details": estimate.details if hasattr(estimate, "details") else {},
    }
    if extra:
        doc.update(extra)
    _atomic_write_json(path, doc)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def _atomic_write_json(path, doc):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


@dataclass
class RunManifest:
    run_id: str
    timestamp: str
    config: dict
    input_digests: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    code_version: str = ""
    status: str = "running"

    def write(self, path):
        _atomic_write_json(path, {"format": "ringbec-manifest-1", **asdict(self)})

    @classmethod
    def read(cls, path) -> "RunManifest":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.pop("format", None) != "ringbec-manifest-1":
            raise FormatError("not a manifest file")
        return cls(**doc)
