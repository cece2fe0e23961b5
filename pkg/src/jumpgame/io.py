"""CSV and binary exports of solved fields.

Binary layout (little endian)::

    8 bytes   magic b"JGFIELD1"
    4 bytes   uint32 header length H
    H bytes   UTF-8 JSON header: kind, time grid, state grid axes and a list
              of fields with their shapes, in storage order
    ...       each field as row-major float64
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError
from .grids import StateGrid
from .levy_paths import TimeGrid

MAGIC = b"JGFIELD1"


def _fmt(x) -> str:
    return repr(float(x))


def write_bsde_csv(sol, path) -> None:
    x = sol.sgrid.nodes
    n_dim = x.shape[1]
    d = sol.z.shape[2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "node"] + [f"x_{i + 1}" for i in range(n_dim)] + ["y"]
                   + [f"z_{j + 1}" for j in range(d)] + ["k_bar"])
        for k in range(sol.y.shape[0]):
            for i in range(len(x)):
                last = k == sol.y.shape[0] - 1
                z = [""] * d if last else [_fmt(c) for c in sol.z[k, i]]
                kb = "" if last else _fmt(sol.kbar[k, i])
                w.writerow([k, i] + [_fmt(c) for c in x[i]] + [_fmt(sol.y[k, i])] + z + [kb])


def write_value_csv(field_, path) -> None:
    """``step, time, node, x_1..x_n, value, u_idx, v_idx`` (indices empty at the final step)."""
    x = field_.sgrid.nodes
    times = field_.tgrid.nodes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "time", "node"] + [f"x_{i + 1}" for i in range(x.shape[1])] + ["value", "u_idx", "v_idx"])
        n = field_.values.shape[0] - 1
        for k in range(n + 1):
            for i in range(len(x)):
                ui = int(field_.u_index[k, i]) if k < n else ""
                vi = int(field_.v_index[k, i]) if k < n else ""
                w.writerow([k, _fmt(times[k]), i] + [_fmt(c) for c in x[i]] + [_fmt(field_.values[k, i]), ui, vi])


def write_dump(path, kind: str, tgrid: TimeGrid, sgrid: StateGrid, fields: dict, extra: dict | None = None) -> None:
    arrays = {k: np.ascontiguousarray(np.asarray(v, dtype="<f8")) for k, v in fields.items()}
    header = {
        "kind": kind,
        "time_grid": tgrid.to_dict(),
        "state_axes": [[float(c) for c in a] for a in sgrid.axes],
        "fields": [{"name": k, "shape": list(a.shape)} for k, a in arrays.items()],
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for a in arrays.values():
            fh.write(a.tobytes(order="C"))


def read_dump(path):
    """Return ``(header, {name: array})``."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ParseError("not a field dump (bad magic)", "")
    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + hlen])
    pos = 12 + hlen
    out = {}
    for spec in header["fields"]:
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(spec["shape"])
        out[spec["name"]] = arr.copy()
        pos += 8 * count
    if pos != len(data):
        raise ParseError("trailing bytes in field dump", "")
    return header, out


def dump_bsde(sol, path) -> None:
    write_dump(path, "bsde", sol.grid, sol.sgrid,
               {"y": sol.y, "z": sol.z, "k_bar": sol.kbar, "k": sol.k,
                "u_idx": sol.u_index.astype(float), "v_idx": sol.v_index.astype(float)})


def dump_value(field_, path, kind: str | None = None) -> None:
    write_dump(path, kind or f"value-{field_.which}", field_.tgrid, field_.sgrid,
               {"values": field_.values, "u_idx": field_.u_index.astype(float),
                "v_idx": field_.v_index.astype(float)})
