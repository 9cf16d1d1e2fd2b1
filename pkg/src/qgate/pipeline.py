"""End-to-end composition: normalize each stream, gate, fuse, select, render."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from .core import EXPERT_STREAMS, LengthMismatch, Query, ScoreVector, SelectionResult, Stage, StreamKind, Timeline
from .gate import GaterDecision
from .normalize import NormalizeConfig, normalize_stream
from .selection import SelectionConfig, build_prompt, fuse_scores, select_top_k

Gater = Callable[[Query], GaterDecision]


@dataclass(frozen=True)
class PipelineTrace:
    raw: Mapping[StreamKind, ScoreVector]
    normalized: Mapping[StreamKind, ScoreVector]
    fused: ScoreVector
    decision: GaterDecision
    selected: tuple[int, ...]
    result: SelectionResult = field(repr=False)


def select_keyframes(
    raw: Mapping[StreamKind, ScoreVector],
    timeline: Timeline,
    query: Query,
    gater: Gater,
    subs: Optional[Sequence[Optional[str]]] = None,
    norm: NormalizeConfig = NormalizeConfig(),
    sel: SelectionConfig = SelectionConfig(),
) -> PipelineTrace:
    """Run normalize, gate, fuse, top-K and prompt rendering for one query.

    Streams missing from ``raw`` count as all-zero and so receive no mass.
    """
    T = len(timeline)
    streams = {}
    for kind in EXPERT_STREAMS:
        vec = raw.get(kind)
        if vec is None:
            vec = ScoreVector(kind, [0.0] * T, Stage.RAW)
        if len(vec) != T:
            raise LengthMismatch(f"{kind.label} stream has {len(vec)} values for {T} frames")
        streams[kind] = vec
    normalized = {k: normalize_stream(v, norm) for k, v in streams.items()}
    decision = gater(query)
    fused = fuse_scores(decision.weights, *(normalized[k] for k in EXPERT_STREAMS))
    chosen = select_top_k(fused, timeline, sel)
    if subs is None:
        subs = [None] * T
    result = build_prompt(chosen, timeline, subs, query, decision.weights, fused)
    return PipelineTrace(streams, normalized, fused, decision, tuple(chosen), result)
