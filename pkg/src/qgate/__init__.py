"""Query-gated keyframe selection for long-video question answering."""
from .core import (
    GatingWeights,
    Query,
    ScoreVector,
    SelectedFrame,
    SelectionResult,
    Stage,
    StreamKind,
    Timeline,
    WeightSource,
    build_timeline,
    format_timestamp,
)
from .estimator import QGateSelector
from .gate import GaterDecision, HeuristicConfig, heuristic_gate, llm_gate, sanitize_weights, static_gate
from .normalize import MaskedSoftmaxNormalizer, NormalizeConfig, normalize_stream
from .pipeline import select_keyframes
from .selection import SelectionConfig, build_prompt, fuse_scores, select_top_k

__version__ = "0.1.0"

__all__ = [
    "GaterDecision", "GatingWeights", "HeuristicConfig", "MaskedSoftmaxNormalizer",
    "NormalizeConfig", "QGateSelector", "Query", "ScoreVector", "SelectedFrame",
    "SelectionConfig", "SelectionResult", "Stage", "StreamKind", "Timeline", "WeightSource",
    "build_prompt", "build_timeline", "format_timestamp", "fuse_scores", "heuristic_gate",
    "llm_gate", "normalize_stream", "sanitize_weights", "select_keyframes", "select_top_k",
    "static_gate",
]
