"""Plain-text tables and run manifests.

Tables are whitespace separated.  Lines starting with ``#`` carry metadata
(``cfg_hash`` first), the first other line holds the column names, and
floats are written with 17 significant digits so they round-trip exactly.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelConfig


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def atomic_write(path, text: str) -> Path:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def export(rows, columns, path, cfg_hash: str, meta: dict | None = None) -> Path:
    """Write a table; ``rows`` is any iterable of sequences (or a 2-D array)."""
    lines = [f"# cfg_hash = {cfg_hash}"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key} = {_fmt(value)}")
    lines.append(" ".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
        lines.append(" ".join(_fmt(v) for v in row))
    return atomic_write(path, "\n".join(lines) + "\n")


def read_table(path):
    """Inverse of :func:`export`: ``(meta, columns, rows)`` with numbers parsed."""
    meta, columns, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif columns is None:
            columns = line.split()
        elif line.strip():
            rows.append([_parse(tok) for tok in line.split()])
    return meta, columns, rows


def _parse(tok):
    try:
        return int(tok)
    except ValueError:
        try:
            return float(tok)
        except ValueError:
            return tok


def trajectory_rows(traj):
    cols = ["t"]
    for n in range(1, traj.amps.shape[1] + 1):
        cols += [f"re_a{n}", f"im_a{n}"]
    data = np.empty((traj.amps.shape[0], 1 + 2 * traj.amps.shape[1]))
    data[:, 0] = traj.times
    data[:, 1::2] = traj.amps.real
    data[:, 2::2] = traj.amps.imag
    return cols, data.tolist()


def snapshot_rows(snap, with_time: bool = False):
    axes = "xyz"[:len(snap.region)]
    grids = snap.coordinates()
    coords = np.stack([g.ravel() for g in grids], axis=1)
    abs2 = (np.abs(snap.field) ** 2).ravel()
    cols = (["t"] if with_time else []) + list(axes) + ["abs2"]
    rows = []
    for c, v in zip(coords.tolist(), abs2.tolist()):
        rows.append(([snap.t] if with_time else []) + c + [v])
    return cols, rows


@dataclass
class RunManifest:
    cfg: ModelConfig
    command: str
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    status: str = "ok"
    errors: list = field(default_factory=list)

    @property
    def cfg_hash(self) -> str:
        return self.cfg.hash()

    def to_json(self) -> str:
        body = {
            "command": self.command,
            "cfg_hash": self.cfg_hash,
            "cfg": asdict(self.cfg),
            "outputs": [str(p) for p in self.outputs],
            "timings": self.timings,
            "status": self.status,
            "errors": self.errors,
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    def write(self, path) -> Path:
        return atomic_write(path, self.to_json())
