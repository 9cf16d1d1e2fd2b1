"""Domain types shared across the engine, timeline construction and timestamp formatting."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class QGateError(Exception):
    """Base class for engine errors."""


class NonPositiveDuration(QGateError):
    pass


class EmptyOrUnsortedTimestamps(QGateError):
    pass


class TimestampOutOfRange(QGateError):
    pass


class NegativeTimestamp(QGateError):
    pass


class LengthMismatch(QGateError):
    pass


class StageViolation(QGateError):
    pass


class StreamKind(enum.IntEnum):
    GROUNDING = 0
    MATCHING = 1
    CONTEXT = 2
    FUSED = 3

    @property
    def label(self) -> str:
        return self.name.lower()


EXPERT_STREAMS = (StreamKind.GROUNDING, StreamKind.MATCHING, StreamKind.CONTEXT)


class Stage(enum.IntEnum):
    RAW = 0
    SCALED = 1
    NORMALIZED = 2
    FUSED = 3


class WeightSource(str, enum.Enum):
    STATIC = "static"
    HEURISTIC = "heuristic"
    LLM = "llm"
    LLM_FALLBACK = "llm_fallback"


@dataclass(frozen=True)
class Timeline:
    timestamps: np.ndarray
    duration: float

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float).copy()
        if ts.ndim != 1 or ts.size == 0:
            raise EmptyOrUnsortedTimestamps("timeline needs at least one timestamp")
        if np.any(np.diff(ts) <= 0):
            raise EmptyOrUnsortedTimestamps("timestamps must be strictly increasing")
        if ts[0] < 0 or ts[-1] > self.duration:
            raise TimestampOutOfRange(
                f"timestamps must lie in [0, {self.duration}], got [{ts[0]}, {ts[-1]}]"
            )
        ts.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "duration", float(self.duration))

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def __getitem__(self, k):
        return self.timestamps[k]

    def __eq__(self, other):
        if not isinstance(other, Timeline):
            return NotImplemented
        return self.duration == other.duration and np.array_equal(
            self.timestamps, other.timestamps
        )

    def __hash__(self):
        return hash((self.duration, self.timestamps.tobytes()))

    def nearest_index(self, t: float) -> Optional[int]:
        """Index of the frame ``t`` snaps to, or None when ``t`` is farther than
        half the local inter-frame interval from every frame."""
        ts = self.timestamps
        k = int(np.searchsorted(ts, t))
        candidates = [i for i in (k - 1, k) if 0 <= i < ts.size]
        best = min(candidates, key=lambda i: (abs(ts[i] - t), i))
        if ts.size == 1:
            half = self.duration / 2 if self.duration > 0 else 0.0
        else:
            lo = ts[best] - ts[best - 1] if best > 0 else ts[1] - ts[0]
            hi = ts[best + 1] - ts[best] if best + 1 < ts.size else ts[-1] - ts[-2]
            half = (lo if t < ts[best] else hi) / 2
        if abs(ts[best] - t) <= half + 1e-9:
            return best
        return None


@dataclass(frozen=True)
class Query:
    text: str
    id: str = "q0"
    category: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text.strip():
            raise ValueError("query text must be non-empty")


@dataclass(frozen=True, eq=False)
class ScoreVector:
    """Per-frame scores of one stream at one pipeline stage.

    ``values`` is stored as a read-only float64 array. Stage invariants are
    checked at construction so a mislabeled vector cannot enter fusion.
    """

    stream: StreamKind
    values: np.ndarray
    stage: Stage = Stage.RAW

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("score vector must be one-dimensional")
        if self.stage in (Stage.SCALED, Stage.NORMALIZED) and v.size:
            if v.min() < 0 or v.max() > 1:
                raise StageViolation(f"{self.stage.name} values must lie in [0, 1]")
        if self.stage is Stage.NORMALIZED and v.size:
            total = math.fsum(v)
            if not (abs(total - 1.0) <= 1e-9 or np.all(v == 0)):
                raise StageViolation(f"normalized vector sums to {total}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return int(self.values.size)

    def __eq__(self, other):
        if not isinstance(other, ScoreVector):
            return NotImplemented
        return (
            self.stream == other.stream
            and self.stage == other.stage
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.stream, self.stage, self.values.tobytes()))


@dataclass(frozen=True)
class GatingWeights:
    grounding: float
    matching: float
    context: float
    source: WeightSource = WeightSource.STATIC

    def __post_init__(self):
        w = self.as_tuple()
        if not all(math.isfinite(x) and 0.0 <= x <= 1.0 for x in w):
            raise ValueError(f"weights must lie in [0, 1], got {w}")
        if abs(math.fsum(w) - 1.0) > 1e-6:
            raise ValueError(f"weights must sum to 1, got {math.fsum(w)}")
        object.__setattr__(self, "source", WeightSource(self.source))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.grounding, self.matching, self.context)

    def argmax(self) -> StreamKind:
        return EXPERT_STREAMS[int(np.argmax(self.as_tuple()))]


@dataclass(frozen=True)
class SelectedFrame:
    t: float
    mmss: str
    score: float
    subtitle: Optional[str] = None


@dataclass(frozen=True)
class SelectionResult:
    query_id: str
    weights: GatingWeights
    frames: tuple[SelectedFrame, ...] = field(default_factory=tuple)
    prompt_text: str = ""

    def __post_init__(self):
        frames = tuple(self.frames)
        if any(a.t >= b.t for a, b in zip(frames, frames[1:])):
            raise ValueError("frames must be sorted by timestamp")
        object.__setattr__(self, "frames", frames)


def build_timeline(
    duration: float,
    fps: Optional[float] = None,
    timestamps: Optional[Sequence[float]] = None,
) -> Timeline:
    """Candidate frame times, either sampled at ``fps`` or passed explicitly.

    Fixed-rate sampling includes t=0 and includes ``duration`` itself when it
    falls exactly on the grid.

    >>> build_timeline(10.0, fps=0.5).timestamps.tolist()
    [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]
    """
    if not duration > 0:
        raise NonPositiveDuration(f"duration must be positive, got {duration}")
    if (fps is None) == (timestamps is None):
        raise ValueError("give exactly one of fps or timestamps")
    if timestamps is not None:
        ts = list(timestamps)
        if not ts or any(b <= a for a, b in zip(ts, ts[1:])):
            raise EmptyOrUnsortedTimestamps("explicit timestamps must be non-empty and sorted")
        if ts[0] < 0 or ts[-1] > duration:
            raise TimestampOutOfRange("explicit timestamps must lie in [0, duration]")
        return Timeline(np.asarray(ts, dtype=float), duration)
    if not fps > 0:
        raise ValueError(f"fps must be positive, got {fps}")
    # k/fps instead of accumulated steps keeps grid points exact
    n = int(math.floor(duration * fps + 1e-9))
    ts = np.arange(n + 1, dtype=float) / fps
    return Timeline(ts[ts <= duration + 1e-9].clip(max=duration), duration)


def format_timestamp(t: float) -> str:
    """Render seconds as minutes-only ``MM:SS``; fractions are truncated."""
    if t < 0:
        raise NegativeTimestamp(f"timestamp must be non-negative, got {t}")
    whole = int(math.floor(t))
    return f"{whole // 60:02d}:{whole % 60:02d}"
