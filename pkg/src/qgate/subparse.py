"""SRT / WebVTT parsing and frame-to-subtitle alignment."""
from __future__ import annotations

import enum
import logging
import re
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from .core import NegativeTimestamp, QGateError, Timeline

logger = logging.getLogger(__name__)


class EmptyTrack(QGateError):
    """No cue could be parsed from the input."""

    def __init__(self, message: str, warnings: Iterable[str] = ()):
        super().__init__(message)
        self.warnings = list(warnings)


class SubtitleFormat(str, enum.Enum):
    SRT = "srt"
    WEBVTT = "webvtt"


@dataclass(frozen=True)
class SubtitleCue:
    start: float
    end: float
    text: str

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"cue needs 0 <= start < end, got [{self.start}, {self.end})")


@dataclass(frozen=True)
class SubtitleTrack:
    cues: tuple[SubtitleCue, ...]
    source_format: SubtitleFormat = SubtitleFormat.SRT
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        cues = tuple(sorted(self.cues, key=lambda c: c.start))
        object.__setattr__(self, "cues", cues)
        object.__setattr__(self, "_starts", [c.start for c in cues])

    def __len__(self) -> int:
        return len(self.cues)

    def __iter__(self):
        return iter(self.cues)


EMPTY_TRACK = SubtitleTrack(())

_TIMING = re.compile(
    r"^\s*(?P<start>(?:\d+:)?\d{1,2}:\d{2}[,.]\d{1,3})\s*-->\s*"
    r"(?P<end>(?:\d+:)?\d{1,2}:\d{2}[,.]\d{1,3})(?:\s+.*)?$"
)
_TAG = re.compile(r"</?(?:[ibu]|c|v|lang|ruby|rt)(?:[.\s][^>]*)?>", re.IGNORECASE)
_TIMESTAMP_TAG = re.compile(r"<\d+:\d{2}(?::\d{2})?[.,]\d{3}>")


def _to_seconds(stamp: str) -> float:
    main, frac = re.split(r"[,.]", stamp)
    parts = [int(p) for p in main.split(":")]
    if len(parts) == 2:
        parts.insert(0, 0)
    hours, minutes, seconds = parts
    if minutes > 59 or seconds > 59:
        raise ValueError(f"bad timestamp {stamp!r}")
    # right-pad so ",5" reads as 500 ms; integer ms keeps the float correctly rounded
    millis = int(frac.ljust(3, "0"))
    return ((hours * 3600 + minutes * 60 + seconds) * 1000 + millis) / 1000.0


def _clean_text(lines: list[str]) -> str:
    text = " ".join(line.strip() for line in lines)
    text = _TIMESTAMP_TAG.sub("", _TAG.sub("", text))
    return " ".join(text.split())


def _blocks(content: str) -> list[list[str]]:
    blocks, current = [], []
    for line in content.split("\n"):
        if line.strip():
            current.append(line.rstrip())
        elif current:
            blocks.append(current)
            current = []
    if current:
        blocks.append(current)
    return blocks


def detect_format(content: str) -> SubtitleFormat:
    head = content.lstrip("﻿").lstrip()
    return SubtitleFormat.WEBVTT if head.startswith("WEBVTT") else SubtitleFormat.SRT


def parse_subtitles(
    content: str, format_hint: Union[SubtitleFormat, str, None] = None
) -> SubtitleTrack:
    """Parse SRT or WebVTT text into a start-ordered track.

    Malformed blocks are skipped and reported in ``track.warnings``. Raises
    :class:`EmptyTrack` when nothing parses.
    """
    content = content.lstrip("﻿").replace("\r\n", "\n").replace("\r", "\n")
    fmt = SubtitleFormat(format_hint) if format_hint else detect_format(content)
    warnings: list[str] = []
    cues: list[SubtitleCue] = []

    for n, block in enumerate(_blocks(content)):
        if fmt is SubtitleFormat.WEBVTT and n == 0 and block[0].startswith("WEBVTT"):
            continue
        if fmt is SubtitleFormat.WEBVTT and block[0].split(" ", 1)[0] in ("NOTE", "STYLE", "REGION"):
            continue
        timing_at = next((i for i, line in enumerate(block) if "-->" in line), None)
        # the timing line may be preceded by at most one index / identifier line
        if timing_at is None or timing_at > 1:
            warnings.append(f"block {n}: no timing line")
            continue
        m = _TIMING.match(block[timing_at])
        try:
            if m is None:
                raise ValueError(block[timing_at])
            cue = SubtitleCue(
                _to_seconds(m["start"]), _to_seconds(m["end"]), _clean_text(block[timing_at + 1:])
            )
        except ValueError as exc:
            warnings.append(f"block {n}: malformed timestamp line {block[timing_at]!r} ({exc})")
            continue
        cues.append(cue)

    for w in warnings:
        logger.warning("subtitle parse: %s", w)
    if not cues:
        raise EmptyTrack("no subtitle cues parsed", warnings)
    return SubtitleTrack(tuple(cues), fmt, tuple(warnings))


def read_subtitles(path: Union[str, Path], format_hint=None) -> SubtitleTrack:
    path = Path(path)
    if format_hint is None and path.suffix.lower() == ".vtt":
        format_hint = SubtitleFormat.WEBVTT
    return parse_subtitles(path.read_text(encoding="utf-8-sig"), format_hint)


def _srt_stamp(t: float) -> str:
    ms = int(round(t * 1000))
    h, rem = divmod(ms, 3_600_000)
    m, rem = divmod(rem, 60_000)
    s, ms = divmod(rem, 1000)
    return f"{h:02d}:{m:02d}:{s:02d},{ms:03d}"


def to_srt(track: SubtitleTrack) -> str:
    """Canonical SRT serialization (1-based indices, LF line endings)."""
    out = []
    for i, cue in enumerate(track.cues, 1):
        out.append(f"{i}\n{_srt_stamp(cue.start)} --> {_srt_stamp(cue.end)}\n{cue.text}\n")
    return "\n".join(out)


def cue_at(track: SubtitleTrack, t: float) -> Optional[str]:
    """Space-joined text of every cue covering ``t`` under the [start, end) rule."""
    if t < 0:
        raise NegativeTimestamp(f"timestamp must be non-negative, got {t}")
    hi = bisect_right(track._starts, t)
    texts = [c.text for c in track.cues[:hi] if t < c.end]
    return " ".join(texts) if texts else None


def align_track(track: SubtitleTrack, timeline: Timeline) -> list[Optional[str]]:
    return [cue_at(track, float(t)) for t in timeline.timestamps]
