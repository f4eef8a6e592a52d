"""Run manifests and CSV exchange of matrices.

Numbers leave the package as 17-significant-digit decimals, which
round-trip every double exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core import DataError


def fmt(x) -> str:
    return format(float(x), ".17g")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


@dataclass
class RunManifest:
    """What ran, with which inputs and settings; enough to repeat the run."""
    command: str
    config: dict
    seed: Optional[int]
    version: str = __version__
    inputs: dict = field(default_factory=dict)
    started: str = field(default_factory=_now)
    finished: Optional[str] = None
    status: str = "running"

    @classmethod
    def begin(cls, path, command: str, config: dict, seed: Optional[int], inputs: Sequence = ()) -> "RunManifest":
        m = cls(command, config, seed, inputs={str(p): file_digest(p) for p in inputs if p is not None})
        m.path = Path(path)
        m.write()
        return m

    def write(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(asdict(self), indent=2))

    def finish(self, status: str = "ok") -> None:
        self.finished, self.status = _now(), status
        self.write()


def manifest_path(out) -> Path:
    """``manifest.json`` inside an output directory, ``<stem>.manifest.json`` beside an output file."""
    out = Path(out)
    if out.suffix == "":
        return out / "manifest.json"
    return out.with_name(out.stem + ".manifest.json")


def write_matrix(path, matrix: np.ndarray, header: Sequence[str], meta: Optional[dict] = None) -> None:
    """CSV with optional ``#key,values...`` metadata lines, a header row, then the rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for key, values in (meta or {}).items():
            values = np.atleast_1d(values)
            w.writerow([f"#{key}"] + [fmt(v) for v in values])
        w.writerow(list(header))
        for row in np.asarray(matrix, dtype=float):
            w.writerow([fmt(v) for v in row])


def read_matrix(path) -> tuple[np.ndarray, list[str], dict]:
    """Inverse of :func:`write_matrix`: ``(matrix, header, meta)``."""
    meta, header, rows = {}, None, []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if header is None and row[0].startswith("#"):
                meta[row[0][1:]] = np.array([float(v) for v in row[1:]])
                continue
            if header is None:
                header = row
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: not a number ({exc})") from exc
    if header is None:
        raise DataError(f"{path}: no header row")
    M = np.array(rows, dtype=float).reshape(len(rows), -1) if rows else np.zeros((0, len(header)))
    if M.shape[1] != len(header):
        raise DataError(f"{path}: {M.shape[1]} columns but {len(header)} header fields")
    return M, header, meta


def read_square(path) -> tuple[np.ndarray, list[str]]:
    M, header, _ = read_matrix(path)
    if M.shape[0] != M.shape[1]:
        raise DataError(f"{path}: kernel must be square, got {M.shape}")
    return M, header
