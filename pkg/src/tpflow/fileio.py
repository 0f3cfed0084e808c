"""File formats: network documents, load tables, voltage tables, metadata.

Networks are JSON with the slack voltage, bus count, branch array and
optional per-node ZIP triples; an optional ``admittance`` section carries
coordinate triplets for Y_dd / Y_ds and overrides branch assembly (the route
for polyphase or externally assembled systems).

Loads and voltages are comma-delimited text with one row per case.  Numeric
output uses 17 significant digits so values round-trip exactly; identical
inputs therefore produce byte-identical files.  Timing and other run
metadata go to a separate JSON document.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
from scipy import sparse

from .dense import LoadMatrix, VoltageBatch
from .network import Branch, NetworkModel, SlackSpec, ZipCoefficients

__all__ = [
    "FileFormatError",
    "read_network",
    "write_network",
    "read_loads",
    "write_loads",
    "write_voltages",
    "write_metadata",
    "read_bench_records",
    "write_bench_records",
]


class FileFormatError(ValueError):
    """Malformed input file; the message names the file and offending field."""


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _require(mapping: dict, key: str, path, context: str = "document"):
    if key not in mapping:
        raise FileFormatError(f"{path}: missing '{key}' in {context}")
    return mapping[key]


def write_network(path, model: NetworkModel) -> None:
    doc: dict[str, Any] = {
        "slack_voltage": {"re": model.slack.v_s.real, "im": model.slack.v_s.imag},
        "n_buses": model.n_demand + 1,
    }
    if model.branches:
        doc["branches"] = [
            {"from": br.from_bus, "to": br.to_bus, "r": br.r, "x": br.x,
             "b_shunt": br.b_shunt}
            for br in model.branches
        ]
    else:
        adm = model.admittance
        y_dd = adm.y_dd.tocoo()
        y_ds = adm.y_ds.tocoo()
        doc["admittance"] = {
            "n_demand": model.n_demand,
            "y_dd": [
                [int(i), int(j), v.real, v.imag]
                for i, j, v in zip(y_dd.row, y_dd.col, y_dd.data)
            ],
            "y_ds": [
                [int(i), int(j), v.real, v.imag]
                for i, j, v in zip(y_ds.row, y_ds.col, y_ds.data)
            ],
        }
    if not model.zip.is_constant_power:
        doc["zip"] = {
            "alpha_z": model.zip.alpha_z.tolist(),
            "alpha_i": model.zip.alpha_i.tolist(),
            "alpha_p": model.zip.alpha_p.tolist(),
        }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _parse_zip(doc: dict, path) -> ZipCoefficients | None:
    if "zip" not in doc:
        return None
    z = doc["zip"]
    try:
        return ZipCoefficients(
            alpha_z=np.asarray(_require(z, "alpha_z", path, "zip section"), float),
            alpha_i=np.asarray(_require(z, "alpha_i", path, "zip section"), float),
            alpha_p=np.asarray(_require(z, "alpha_p", path, "zip section"), float),
        )
    except ValueError as exc:
        raise FileFormatError(f"{path}: invalid zip section: {exc}") from exc


def _triplets_to_csc(entries, shape, path, name):
    rows, cols, vals = [], [], []
    for k, entry in enumerate(entries):
        if len(entry) != 4:
            raise FileFormatError(
                f"{path}: {name} entry {k} must be [row, col, re, im]"
            )
        i, j, re, im = entry
        rows.append(int(i))
        cols.append(int(j))
        vals.append(complex(re, im))
    try:
        return sparse.coo_matrix((vals, (rows, cols)), shape=shape).tocsc()
    except ValueError as exc:
        raise FileFormatError(f"{path}: {name}: {exc}") from exc


def read_network(path) -> NetworkModel:
    path = Path(path)
    if not path.exists():
        raise FileFormatError(f"{path}: no such file")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON: {exc}") from exc

    sv = _require(doc, "slack_voltage", path)
    try:
        v_s = complex(float(_require(sv, "re", path, "slack_voltage")),
                      float(_require(sv, "im", path, "slack_voltage")))
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: slack_voltage: {exc}") from exc
    slack = SlackSpec(v_s)
    n_buses = int(_require(doc, "n_buses", path))

    if "admittance" in doc:
        adm = doc["admittance"]
        n_demand = int(_require(adm, "n_demand", path, "admittance section"))
        y_dd = _triplets_to_csc(
            _require(adm, "y_dd", path, "admittance section"),
            (n_demand, n_demand), path, "y_dd",
        )
        y_ds = _triplets_to_csc(
            _require(adm, "y_ds", path, "admittance section"),
            (n_demand, 1), path, "y_ds",
        )
        zip_coeffs = _parse_zip(doc, path)
        return NetworkModel.from_admittance(
            y_dd, y_ds, slack=slack, zip_coeffs=zip_coeffs
        )

    raw = _require(doc, "branches", path)
    branches = []
    for k, entry in enumerate(raw):
        try:
            branches.append(
                Branch(
                    from_bus=int(_require(entry, "from", path, f"branch {k}")),
                    to_bus=int(_require(entry, "to", path, f"branch {k}")),
                    r=float(_require(entry, "r", path, f"branch {k}")),
                    x=float(_require(entry, "x", path, f"branch {k}")),
                    b_shunt=float(entry.get("b_shunt", 0.0)),
                )
            )
        except (TypeError, ValueError) as exc:
            raise FileFormatError(f"{path}: branch {k}: {exc}") from exc
    zip_coeffs = _parse_zip(doc, path)
    try:
        return NetworkModel.from_branches(
            branches, n_buses, slack=slack, zip_coeffs=zip_coeffs
        )
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def _load_header(n_demand: int) -> list[str]:
    cols = []
    for node in range(1, n_demand + 1):
        cols += [f"p_{node}", f"q_{node}"]
    return cols


def write_loads(path, loads: LoadMatrix) -> None:
    b = loads.n_demand
    with open(path, "w") as fh:
        fh.write(",".join(_load_header(b)) + "\n")
        for j in range(loads.tau):
            col = loads.values[:, j]
            cells = []
            for v in col:
                cells += [_fmt(v.real), _fmt(v.imag)]
            fh.write(",".join(cells) + "\n")


def read_loads(path) -> LoadMatrix:
    path = Path(path)
    if not path.exists():
        raise FileFormatError(f"{path}: no such file")
    with open(path) as fh:
        header = fh.readline().strip()
        if not header:
            raise FileFormatError(f"{path}: empty file")
        names = header.split(",")
        if len(names) % 2 != 0 or not names:
            raise FileFormatError(
                f"{path}: header must hold p_<node>,q_<node> pairs"
            )
        b = len(names) // 2
        if names != _load_header(b):
            raise FileFormatError(
                f"{path}: header {names[:4]}... does not match the expected "
                f"p_1,q_1,...,p_{b},q_{b} layout"
            )
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2 * b:
                raise FileFormatError(
                    f"{path}: line {lineno}: expected {2 * b} fields, "
                    f"got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise FileFormatError(f"{path}: line {lineno}: {exc}") from exc
    if not rows:
        raise FileFormatError(f"{path}: no load cases")
    arr = np.asarray(rows)
    values = (arr[:, 0::2] + 1j * arr[:, 1::2]).T
    return LoadMatrix(values=values, dims=(values.shape[1],))


def write_voltages(path, batch: VoltageBatch) -> None:
    """One row per case: vm_<node>,va_<node> pairs plus a converged flag."""
    b = batch.values.shape[0]
    vm = np.abs(batch.values)
    va = np.angle(batch.values)
    cols = []
    for node in range(1, b + 1):
        cols += [f"vm_{node}", f"va_{node}"]
    cols.append("converged")
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for j in range(batch.tau):
            cells = []
            for i in range(b):
                cells += [_fmt(vm[i, j]), _fmt(va[i, j])]
            cells.append("1" if batch.converged_mask[j] else "0")
            fh.write(",".join(cells) + "\n")


def write_metadata(path, meta: dict) -> None:
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


_BENCH_HEADER = "method,b_phi,tau,wall_seconds,iterations,repeats,error"


def write_bench_records(path, records) -> None:
    with open(path, "w") as fh:
        fh.write(_BENCH_HEADER + "\n")
        for r in records:
            err = (r.error or "").replace(",", ";")
            fh.write(
                f"{r.method},{r.b_phi},{r.tau},{_fmt(r.wall_seconds)},"
                f"{r.iterations},{r.repeats},{err}\n"
            )


def read_bench_records(path):
    from .bench import BenchRecord

    path = Path(path)
    if not path.exists():
        raise FileFormatError(f"{path}: no such file")
    records = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != _BENCH_HEADER:
            raise FileFormatError(f"{path}: unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise FileFormatError(
                    f"{path}: line {lineno}: expected 7 fields, got {len(parts)}"
                )
            try:
                records.append(
                    BenchRecord(
                        method=parts[0],
                        b_phi=int(parts[1]),
                        tau=int(parts[2]),
                        wall_seconds=float(parts[3]),
                        iterations=int(parts[4]),
                        repeats=int(parts[5]),
                        error=parts[6] or None,
                    )
                )
            except ValueError as exc:
                raise FileFormatError(f"{path}: line {lineno}: {exc}") from exc
    return records
