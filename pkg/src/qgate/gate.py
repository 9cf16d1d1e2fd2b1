"""Per-query gating weights: static, keyword heuristic, and LLM-backed."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Optional

import numpy as np

from .core import GatingWeights, QGateError, Query, WeightSource

logger = logging.getLogger(__name__)

GATING_PROMPT_VERSION = "gating_v1"

ChatFn = Callable[[str, str], str]


class AllZeroWeights(QGateError):
    pass


class NonFiniteWeight(QGateError):
    pass


class MalformedGatingResponse(QGateError):
    pass


@dataclass(frozen=True)
class HeuristicConfig:
    base_potentials: tuple[float, float, float] = (0.5, 1.0, 0.5)
    boost: float = 1.5
    grounding_keywords: tuple[str, ...] = (
        "how many", "what color", "what colour", "count", "which object", "where is",
        "number of", "what shape", "what is written",
    )
    matching_keywords: tuple[str, ...] = (
        "scene", "main focus", "overall", "atmosphere", "setting", "theme", "mood",
    )
    context_keywords: tuple[str, ...] = (
        "why", "subtitle", "say", "mention", "reason", "according to", "talk", "explain",
    )

    def __post_init__(self):
        if not self.boost > 0:
            raise ValueError("boost must be > 0")
        for name in ("grounding_keywords", "matching_keywords", "context_keywords"):
            words = tuple(w.lower() for w in getattr(self, name))
            if not words:
                raise ValueError(f"{name} must be non-empty")
            object.__setattr__(self, name, words)

    def keyword_sets(self):
        return (self.grounding_keywords, self.matching_keywords, self.context_keywords)


@dataclass(frozen=True)
class GaterDecision:
    weights: GatingWeights
    rationale: Optional[str] = None
    raw_response: Optional[str] = field(default=None, repr=False)


def static_gate() -> GaterDecision:
    third = 1.0 / 3.0
    return GaterDecision(GatingWeights(third, third, third, WeightSource.STATIC), "equal weights")


def softmax3(potentials) -> tuple[float, float, float]:
    p = np.asarray(potentials, dtype=float)
    e = np.exp(p - p.max())
    w = e / e.sum()
    return tuple(float(x) for x in w)


def heuristic_gate(query: Query, cfg: HeuristicConfig = HeuristicConfig()) -> GaterDecision:
    """Keyword-boosted potentials pushed through a unit-temperature softmax.

    Each stream is boosted at most once, however many of its keywords match.
    """
    text = query.text.lower()
    potentials, matched = [], []
    for base, words in zip(cfg.base_potentials, cfg.keyword_sets()):
        hits = [w for w in words if w in text]
        potentials.append(base + (cfg.boost if hits else 0.0))
        matched.extend(hits)
    w = softmax3(potentials)
    rationale = "matched: " + ", ".join(matched) if matched else "no keywords matched; default bias"
    return GaterDecision(GatingWeights(*w, source=WeightSource.HEURISTIC), rationale)


def sanitize_weights(parsed, source: WeightSource = WeightSource.LLM) -> GatingWeights:
    """Clamp negatives to 0 and rescale to sum 1."""
    vals = [float(x) for x in parsed]
    if len(vals) != 3:
        raise ValueError("expected three weights")
    if not all(math.isfinite(x) for x in vals):
        raise NonFiniteWeight(f"non-finite weight in {vals}")
    vals = [max(x, 0.0) for x in vals]
    total = math.fsum(vals)
    if total <= 0:
        raise AllZeroWeights("all weights are zero after clamping")
    return GatingWeights(*(x / total for x in vals), source=source)


def gating_prompt() -> str:
    return resources.files("qgate.prompts").joinpath(f"{GATING_PROMPT_VERSION}.txt").read_text("utf-8")


def gating_user_message(query: Query) -> str:
    return f"Question: {query.text.strip()}"


def extract_json_object(text: str) -> Optional[dict]:
    """First balanced ``{...}`` block in ``text`` that parses as a JSON object."""
    start = text.find("{")
    while start != -1:
        depth, in_str, escaped = 0, False, False
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    try:
                        obj = json.loads(text[start:i + 1])
                    except json.JSONDecodeError:
                        break
                    if isinstance(obj, dict):
                        return obj
                    break
        start = text.find("{", start + 1)
    return None


def parse_gating_response(text: str) -> tuple[GatingWeights, Optional[str]]:
    obj = extract_json_object(text)
    if obj is None:
        raise MalformedGatingResponse("no JSON object in response")
    try:
        raw = [obj["grounding"], obj["matching"], obj["context"]]
    except KeyError as exc:
        raise MalformedGatingResponse(f"missing key {exc}") from exc
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in raw):
        raise MalformedGatingResponse(f"weights must be numbers, got {raw}")
    try:
        weights = sanitize_weights(raw, WeightSource.LLM)
    except (AllZeroWeights, NonFiniteWeight) as exc:
        raise MalformedGatingResponse(str(exc)) from exc
    rationale = obj.get("rationale")
    return weights, rationale if isinstance(rationale, str) else None


def llm_gate(query: Query, chat: ChatFn, fallback: HeuristicConfig = HeuristicConfig()) -> GaterDecision:
    """Ask a chat model for weights; never fails.

    A malformed reply is retried once. Transport errors, or a second malformed
    reply, fall back to :func:`heuristic_gate` tagged ``LLM_FALLBACK``.
    """
    system, user = gating_prompt(), gating_user_message(query)
    last = None
    for attempt in range(2):
        try:
            reply = chat(system, user)
        except Exception as exc:  # any transport problem ends in the fallback
            logger.warning("gating request failed (%s); using heuristic fallback", exc)
            last = f"transport failure: {exc}"
            break
        try:
            weights, rationale = parse_gating_response(reply)
        except MalformedGatingResponse as exc:
            logger.warning("gating response attempt %d unusable: %s", attempt + 1, exc)
            last = reply
            continue
        return GaterDecision(weights, rationale, reply)

    fb = heuristic_gate(query, fallback)
    return GaterDecision(
        GatingWeights(*fb.weights.as_tuple(), source=WeightSource.LLM_FALLBACK),
        f"fallback ({fb.rationale})",
        last,
    )


@dataclass(frozen=True)
class ScriptedGater:
    """Deterministic stand-in for the LLM gater, keyed on query category."""

    table: tuple[tuple[str, tuple[float, float, float]], ...] = (
        ("grounding", (0.5, 0.3, 0.2)),
        ("matching", (0.2, 0.6, 0.2)),
        ("context", (0.2, 0.1, 0.7)),
    )
    default: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def __call__(self, query: Query) -> GaterDecision:
        w = dict(self.table).get(query.category or "", self.default)
        return GaterDecision(sanitize_weights(w, WeightSource.LLM), f"scripted for {query.category!r}")


def fixed_gate(weights, source: WeightSource = WeightSource.LLM) -> GaterDecision:
    return GaterDecision(sanitize_weights(weights, source), "fixed weights")
