"""Event-sequence domain types and JSON Lines persistence."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional

import numpy as np


class DataError(ValueError):
    """Raised when input data violates a dataset invariant or cannot be parsed."""


@dataclass(frozen=True)
class Event:
    time: float
    type_id: int


@dataclass(frozen=True)
class EventSequence:
    id: str
    events: tuple[Event, ...]
    horizon: float
    label: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if not self.events:
            raise DataError(f"sequence {self.id!r}: no events")
        prev = -math.inf
        for ev in self.events:
            if not math.isfinite(ev.time) or ev.time < 0:
                raise DataError(f"sequence {self.id!r}: time {ev.time} is not finite and nonnegative")
            if ev.time > self.horizon:
                raise DataError(f"sequence {self.id!r}: time {ev.time} exceeds horizon {self.horizon}")
            if ev.time <= prev:
                raise DataError(f"sequence {self.id!r}: times not strictly increasing at t={ev.time}")
            if ev.type_id < 0:
                raise DataError(f"sequence {self.id!r}: negative type {ev.type_id}")
            prev = ev.time

    def __len__(self) -> int:
        return len(self.events)

    # numpy views used by the numerical modules; excluded from equality
    @cached_property
    def times(self) -> np.ndarray:
        return np.array([ev.time for ev in self.events], dtype=float)

    @cached_property
    def types(self) -> np.ndarray:
        return np.array([ev.type_id for ev in self.events], dtype=np.int64)

    @classmethod
    def from_arrays(cls, id: str, times, types, horizon: float, label: Optional[int] = None) -> "EventSequence":
        events = tuple(Event(float(t), int(c)) for t, c in zip(times, types))
        return cls(id, events, float(horizon), label)


@dataclass(frozen=True)
class Dataset:
    sequences: tuple[EventSequence, ...]
    num_types: int
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "sequences", tuple(self.sequences))
        if self.num_types < 1:
            raise DataError(f"num_types must be >= 1, got {self.num_types}")
        if not self.horizon > 0:
            raise DataError(f"horizon must be positive, got {self.horizon}")
        if len(self.sequences) < 2:
            raise DataError(f"a dataset needs at least 2 sequences, got {len(self.sequences)}")
        for seq in self.sequences:
            if seq.horizon != self.horizon:
                raise DataError(f"sequence {seq.id!r}: horizon {seq.horizon} differs from dataset horizon {self.horizon}")
            bad = [ev.type_id for ev in seq.events if ev.type_id >= self.num_types]
            if bad:
                raise DataError(f"sequence {seq.id!r}: type {bad[0]} outside [0, {self.num_types})")

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def labels(self) -> Optional[np.ndarray]:
        if any(s.label is None for s in self.sequences):
            return None
        return np.array([s.label for s in self.sequences], dtype=np.int64)

    @property
    def total_events(self) -> int:
        return sum(len(s) for s in self.sequences)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.sequences[i] for i in indices), self.num_types, self.horizon)


@dataclass(frozen=True)
class EventVector:
    coords: np.ndarray
    bounds: np.ndarray = field(repr=False)


def to_event_vector(event: Event, num_types: int, horizon: float) -> EventVector:
    """Embed an event as ``[time, one_hot(type)]`` together with per-coordinate maxima."""
    if not 0 <= event.type_id < num_types:
        raise ValueError(f"type {event.type_id} outside [0, {num_types})")
    if not 0 <= event.time <= horizon:
        raise ValueError(f"time {event.time} outside [0, {horizon}]")
    coords = np.zeros(num_types + 1)
    coords[0] = event.time
    coords[1 + event.type_id] = 1.0
    bounds = np.ones(num_types + 1)
    bounds[0] = horizon
    return EventVector(coords, bounds)


def header_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".header.json")


def _read_header(path: Path) -> Optional[dict]:
    hp = header_path(path)
    if not hp.exists():
        return None
    try:
        header = json.loads(hp.read_text())
        return {"num_types": int(header["num_types"]), "horizon": float(header["horizon"])}
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{hp}: malformed header ({exc})") from exc


def load_dataset(path, num_types: Optional[int] = None, horizon: Optional[float] = None) -> Dataset:
    """Read a JSON Lines dataset.

    The header (``num_types``, ``horizon``) comes from the sidecar file
    ``<stem>.header.json`` and/or the explicit arguments; when both are given
    they must agree.
    """
    path = Path(path)
    header = _read_header(path)
    if header is not None:
        if num_types is not None and num_types != header["num_types"]:
            raise DataError(f"num_types={num_types} disagrees with header value {header['num_types']}")
        if horizon is not None and float(horizon) != header["horizon"]:
            raise DataError(f"horizon={horizon} disagrees with header value {header['horizon']}")
        num_types, horizon = header["num_types"], header["horizon"]
    if num_types is None or horizon is None:
        raise DataError(f"{path}: num_types and horizon required (sidecar {header_path(path).name} or arguments)")

    sequences = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                events = [Event(float(e["t"]), int(e["c"])) for e in obj["events"]]
                label = obj.get("label")
                seq_id = str(obj["id"])
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: parse error ({exc})") from exc
            sequences.append(EventSequence(seq_id, tuple(events), float(horizon),
                                           None if label is None else int(label)))
    return Dataset(tuple(sequences), int(num_types), float(horizon))


def save_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    try:
        with open(path, "w") as fh:
            for seq in dataset.sequences:
                obj = {"id": seq.id, "events": [{"t": ev.time, "c": ev.type_id} for ev in seq.events]}
                if seq.label is not None:
                    obj["label"] = seq.label
                fh.write(json.dumps(obj) + "\n")
        header_path(path).write_text(json.dumps({"num_types": dataset.num_types, "horizon": dataset.horizon}))
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc}") from exc
