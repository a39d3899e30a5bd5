"""Event and sequence containers, validation, scaling and CSV I/O.

Events are stored as rows ``(t, x, y)`` of a float array. Everything inside the
package works in scaled coordinates (time in ``[0, 2]``, space in ``[-2, 2]``);
raw coordinates only appear at ingestion and output boundaries.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

TIME_RANGE = (0.0, 2.0)
SPACE_RANGE = (-2.0, 2.0)


class Event(NamedTuple):
    t: float
    x: float
    y: float

    @property
    def location(self) -> tuple[float, float]:
        return (self.x, self.y)


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if ndim == 2:
        arr = arr.reshape(-1, 3)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EventSequence:
    """Time-ordered events on ``[0, horizon)`` plus optional static features.

    ``data`` has shape ``(n, 3)`` with columns ``t, x, y``. Construction does
    not validate ordering; use :func:`validate_sequence` or :func:`require_valid`.
    """

    data: np.ndarray
    horizon: float
    features: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, 2))
        object.__setattr__(self, "horizon", float(self.horizon))
        if self.features is not None:
            object.__setattr__(self, "features", _frozen(self.features, 1))

    @classmethod
    def from_events(cls, events: Iterable[Sequence[float]], horizon: float, features=None):
        return cls(np.array([tuple(e) for e in events], dtype=float).reshape(-1, 3), horizon, features)

    @classmethod
    def empty(cls, horizon: float, features=None) -> EventSequence:
        return cls(np.zeros((0, 3)), horizon, features)

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def locations(self) -> np.ndarray:
        return self.data[:, 1:]

    @property
    def events(self) -> list[Event]:
        return [Event(*map(float, row)) for row in self.data]

    def with_features(self, features) -> EventSequence:
        return EventSequence(self.data, self.horizon, features)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventSequence):
            return NotImplemented
        same_feat = (self.features is None and other.features is None) or (
            self.features is not None
            and other.features is not None
            and np.array_equal(self.features, other.features)
        )
        return self.horizon == other.horizon and np.array_equal(self.data, other.data) and same_feat


@dataclass(frozen=True)
class SpaceRegion:
    """Axis-aligned rectangle ``[x_min, x_max] x [y_min, y_max]``."""

    x_min: float = -2.0
    x_max: float = 2.0
    y_min: float = -2.0
    y_max: float = 2.0

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate region {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def contains(self, xy) -> np.ndarray | bool:
        xy = np.asarray(xy, dtype=float)
        x, y = xy[..., 0], xy[..., 1]
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)


@dataclass(frozen=True)
class SequenceViolation:
    index: int
    kind: str  # "order", "horizon", "nonfinite", "negative_time"
    message: str


def validate_sequence(seq: EventSequence) -> SequenceViolation | None:
    """Return the first invariant violation in ``seq``, or ``None`` if valid."""
    if not (math.isfinite(seq.horizon) and seq.horizon > 0):
        return SequenceViolation(-1, "horizon", f"horizon must be positive and finite, got {seq.horizon}")
    if seq.features is not None and not np.all(np.isfinite(seq.features)):
        return SequenceViolation(-1, "nonfinite", "static features contain non-finite values")
    prev = -math.inf
    for i, (t, x, y) in enumerate(seq.data):
        if not (math.isfinite(t) and math.isfinite(x) and math.isfinite(y)):
            return SequenceViolation(i, "nonfinite", f"event {i} has non-finite coordinates")
        if t < 0:
            return SequenceViolation(i, "negative_time", f"event {i} has negative time {t}")
        if t <= prev:
            kind = "duplicate time" if t == prev else "decreasing time"
            return SequenceViolation(i, "order", f"{kind} at index {i}: {t} after {prev}")
        if t >= seq.horizon:
            return SequenceViolation(i, "horizon", f"event {i} at t={t} not below horizon {seq.horizon}")
        prev = t
    return None


def require_valid(seq: EventSequence) -> EventSequence:
    bad = validate_sequence(seq)
    if bad is not None:
        raise ValueError(f"invalid event sequence: {bad.message}")
    return seq


def common_horizon(sequences: Sequence[EventSequence]) -> float:
    horizons = {s.horizon for s in sequences}
    if len(horizons) != 1:
        raise ValueError(f"sequences in one batch must share a horizon, got {sorted(horizons)}")
    return horizons.pop()


@dataclass(frozen=True)
class ScalingTransform:
    """Per-axis affine map ``scaled = (raw - offset) * scale``."""

    time_offset: float = 0.0
    time_scale: float = 1.0
    space_offsets: tuple[float, float] = (0.0, 0.0)
    space_scales: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        scales = (self.time_scale, *self.space_scales)
        if not all(math.isfinite(s) and s > 0 for s in scales):
            raise ValueError(f"scales must be positive and finite, got {scales}")

    @property
    def _offset(self) -> np.ndarray:
        return np.array([self.time_offset, *self.space_offsets])

    @property
    def _scale(self) -> np.ndarray:
        return np.array([self.time_scale, *self.space_scales])

    def scale_events(self, data) -> np.ndarray:
        return (np.asarray(data, dtype=float).reshape(-1, 3) - self._offset) * self._scale

    def unscale_events(self, data) -> np.ndarray:
        return np.asarray(data, dtype=float).reshape(-1, 3) / self._scale + self._offset

    def scale_time(self, t):
        return (np.asarray(t, dtype=float) - self.time_offset) * self.time_scale

    def unscale_time(self, t):
        return np.asarray(t, dtype=float) / self.time_scale + self.time_offset

    def scale_location(self, xy) -> np.ndarray:
        return (np.asarray(xy, dtype=float) - np.array(self.space_offsets)) * np.array(self.space_scales)

    def unscale_location(self, xy) -> np.ndarray:
        return np.asarray(xy, dtype=float) / np.array(self.space_scales) + np.array(self.space_offsets)

    def scale(self, seq: EventSequence) -> EventSequence:
        horizon = float(self.scale_time(seq.horizon))
        return EventSequence(self.scale_events(seq.data), horizon, seq.features)

    def unscale(self, seq: EventSequence) -> EventSequence:
        horizon = float(self.unscale_time(seq.horizon))
        return EventSequence(self.unscale_events(seq.data), horizon, seq.features)

    def to_dict(self) -> dict:
        return {
            "time_offset": self.time_offset,
            "time_scale": self.time_scale,
            "space_offsets": list(self.space_offsets),
            "space_scales": list(self.space_scales),
        }

    @classmethod
    def from_dict(cls, d: dict) -> ScalingTransform:
        return cls(
            float(d["time_offset"]),
            float(d["time_scale"]),
            tuple(map(float, d["space_offsets"])),
            tuple(map(float, d["space_scales"])),
        )


def fit_scaling(sequences: Sequence[EventSequence]) -> ScalingTransform:
    """Fit the per-dataset affine map into ``[0, 2] x [-2, 2]^2``.

    Time is measured from each sequence's origin, so ``[0, max horizon]`` maps
    onto ``[0, 2]``. Each spatial axis maps its observed ``[min, max]`` onto
    ``[-2, 2]``. A constant axis keeps unit scale and is only centred.
    """
    non_empty = [s.data for s in sequences if len(s)]
    if not non_empty:
        raise ValueError("cannot fit a scaling transform on a dataset without events")
    data = np.concatenate(non_empty)
    t_max = max(max(s.horizon for s in sequences), float(data[:, 0].max()))
    time_scale = (TIME_RANGE[1] - TIME_RANGE[0]) / t_max
    offsets, scales = [], []
    width = SPACE_RANGE[1] - SPACE_RANGE[0]
    for axis, name in ((1, "x"), (2, "y")):
        lo, hi = float(data[:, axis].min()), float(data[:, axis].max())
        offsets.append(0.5 * (lo + hi))
        if hi > lo:
            scales.append(width / (hi - lo))
        else:
            logger.warning("spatial axis %s is constant (%g); using unit scale", name, lo)
            scales.append(1.0)
    return ScalingTransform(0.0, time_scale, tuple(offsets), tuple(scales))


# --- CSV format: header ``t,x,y``; optional sidecar ``<stem>.json`` with horizon/features


def write_sequence_csv(seq: EventSequence, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write("t,x,y\n")
        for t, x, y in seq.data:
            fh.write(",".join(repr(float(v)) for v in (t, x, y)) + "\n")
    meta = {"horizon": seq.horizon}
    if seq.features is not None:
        meta["features"] = [float(v) for v in seq.features]
    path.with_suffix(".json").write_text(json.dumps(meta))


def read_sequence_csv(path: str | Path, horizon: float | None = None) -> EventSequence:
    path = Path(path)
    lines = path.read_text().strip().splitlines()
    if not lines or lines[0].replace(" ", "") != "t,x,y":
        raise ValueError(f"{path}: expected header 't,x,y'")
    rows = [tuple(float(v) for v in line.split(",")) for line in lines[1:] if line.strip()]
    data = np.array(rows, dtype=float).reshape(-1, 3)
    features = None
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        horizon = meta.get("horizon", horizon)
        features = meta.get("features")
    if horizon is None:
        raise ValueError(f"{path}: no horizon given and no sidecar JSON found")
    return EventSequence(data, horizon, features)


def write_sequence_dir(sequences: Sequence[EventSequence], directory: str | Path, prefix: str = "seq") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(sequences))))
    paths = []
    for i, seq in enumerate(sequences):
        p = directory / f"{prefix}_{i:0{width}d}.csv"
        write_sequence_csv(seq, p)
        paths.append(p)
    return paths


def read_sequence_dir(directory: str | Path, horizon: float | None = None) -> list[EventSequence]:
    directory = Path(directory)
    paths = sorted(directory.glob("*.csv"))
    if not paths:
        raise FileNotFoundError(f"no event CSV files in {directory}")
    return [read_sequence_csv(p, horizon) for p in paths]


def stack_events(sequences: Sequence[EventSequence]) -> np.ndarray:
    """All events of all sequences as one ``(n, 3)`` array."""
    if not sequences:
        return np.zeros((0, 3))
    return np.concatenate([s.data for s in sequences]).reshape(-1, 3)


@dataclass(frozen=True)
class StaticFeatures:
    """Named static feature vector; ``values`` has fixed length within a dataset."""

    values: np.ndarray
    names: tuple[str, ...] = field(default=())
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, 1))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("static features must be finite")
        if self.names and len(self.names) != len(self.values):
            raise ValueError("feature names and values differ in length")

    def __len__(self) -> int:
        return len(self.values)
