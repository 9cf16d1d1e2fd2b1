"""Weighted fusion of normalized streams, top-K frame selection and prompt rendering."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    GatingWeights,
    LengthMismatch,
    Query,
    ScoreVector,
    SelectedFrame,
    SelectionResult,
    Stage,
    StageViolation,
    StreamKind,
    Timeline,
    format_timestamp,
)


class IndexOutOfRange(IndexError):
    pass


@dataclass(frozen=True)
class SelectionConfig:
    k: int = 8

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")


def fuse_values(weights, s_g, s_m, s_c) -> np.ndarray:
    w_g, w_m, w_c = weights
    return w_g * np.asarray(s_g) + w_m * np.asarray(s_m) + w_c * np.asarray(s_c)


def fuse_scores(weights: GatingWeights, s_g: ScoreVector, s_m: ScoreVector, s_c: ScoreVector) -> ScoreVector:
    streams = (s_g, s_m, s_c)
    for s in streams:
        if s.stage is not Stage.NORMALIZED:
            raise StageViolation(f"fusion needs NORMALIZED inputs, got {s.stage.name} for {s.stream.name}")
    if len({len(s) for s in streams}) != 1:
        raise LengthMismatch("streams have different lengths")
    fused = fuse_values(weights.as_tuple(), s_g.values, s_m.values, s_c.values)
    # rounding can push a one-hot sum a hair above 1
    return ScoreVector(StreamKind.FUSED, np.clip(fused, 0.0, 1.0), Stage.FUSED)


def top_k_indices(scores, k: int) -> list[int]:
    """Indices of the ``k`` largest scores, earliest index winning ties, in index order."""
    scores = np.asarray(scores, dtype=float)
    if k >= scores.size:
        return list(range(scores.size))
    # stable sort on -score keeps equal scores in index order
    order = np.argsort(-scores, kind="stable")[:k]
    return sorted(int(i) for i in order)


def select_top_k(fused: ScoreVector, timeline: Timeline, cfg: SelectionConfig = SelectionConfig()) -> list[int]:
    if len(fused) != len(timeline):
        raise LengthMismatch(f"{len(fused)} scores for {len(timeline)} frames")
    # timeline is strictly increasing, so index order is temporal order
    return top_k_indices(fused.values, cfg.k)


def render_prompt(frames: Sequence[SelectedFrame], query: Query) -> str:
    lines = []
    for f in frames:
        lines.append(f"[Image at {f.mmss}]")
        if f.subtitle is not None:
            lines.append(f"[Subtitle for Image at {f.mmss}]: {f.subtitle}")
    lines.append("")
    lines.append(f"Question: {query.text.strip()}")
    return "\n".join(lines) + "\n"


def build_prompt(
    selection: Sequence[int],
    timeline: Timeline,
    subs: Sequence[Optional[str]],
    query: Query,
    weights: GatingWeights,
    fused: Optional[ScoreVector] = None,
) -> SelectionResult:
    """Assemble the per-frame records and the timestamped prompt for the selected frames."""
    T = len(timeline)
    if len(subs) != T:
        raise LengthMismatch(f"{len(subs)} subtitle slots for {T} frames")
    for i in selection:
        if not 0 <= i < T:
            raise IndexOutOfRange(f"frame index {i} outside [0, {T})")
    frames = []
    for i in sorted(selection):
        t = float(timeline[i])
        score = float(fused.values[i]) if fused is not None else 0.0
        frames.append(SelectedFrame(t, format_timestamp(t), score, subs[i]))
    return SelectionResult(query.id, weights, tuple(frames), render_prompt(frames, query))
