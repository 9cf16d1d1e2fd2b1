"""Raw relevance scores for the grounding, matching and context experts, plus JSONL ingestion."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .core import QGateError, ScoreVector, Stage, StreamKind, Timeline

logger = logging.getLogger(__name__)

PREDICATES = ("left-of", "right-of", "above", "below", "overlapping")
DEFAULT_RELATION_BONUS = 0.5


class DimensionMismatch(QGateError):
    pass


class ZeroNormVector(QGateError):
    pass


class UnknownEntityInRelation(QGateError):
    pass


class MissingSubtitleEmbedding(QGateError):
    pass


class SchemaViolation(QGateError):
    pass


class TooManyMalformedLines(QGateError):
    def __init__(self, message: str, errors: Sequence[str] = ()):
        super().__init__(message)
        self.errors = list(errors)


class IoFailure(QGateError):
    pass


def as_embedding(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatch("embedding must be a non-empty 1-d vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("embedding has non-finite entries")
    return v


@dataclass(frozen=True)
class Detection:
    t: float
    entity: str
    conf: float
    box: tuple[float, float, float, float]

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t >= 0):
            raise ValueError(f"detection time must be finite and >= 0, got {self.t}")
        if not 0.0 <= self.conf <= 1.0:
            raise ValueError(f"conf must lie in [0, 1], got {self.conf}")
        box = tuple(float(x) for x in self.box)
        if len(box) != 4 or not (box[0] < box[2] and box[1] < box[3]):
            raise ValueError(f"box must be (x1, y1, x2, y2) with x1<x2, y1<y2, got {self.box}")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "entity", self.entity.strip().lower())


@dataclass(frozen=True)
class GroundingSpec:
    entities: tuple[str, ...]
    relations: tuple[tuple[str, str, str], ...] = field(default_factory=tuple)

    def __post_init__(self):
        ents = tuple(dict.fromkeys(e.strip().lower() for e in self.entities if e.strip()))
        if not ents:
            raise ValueError("grounding spec needs at least one entity")
        rels = []
        for subj, pred, obj in self.relations:
            subj, pred, obj = subj.strip().lower(), pred.strip().lower(), obj.strip().lower()
            if pred not in PREDICATES:
                raise ValueError(f"unknown predicate {pred!r}")
            if subj not in ents or obj not in ents:
                raise UnknownEntityInRelation(f"relation ({subj}, {pred}, {obj}) uses an unlisted entity")
            rels.append((subj, pred, obj))
        object.__setattr__(self, "entities", ents)
        object.__setattr__(self, "relations", tuple(rels))


def cosine_similarity(a, b) -> float:
    a, b = as_embedding(a), as_embedding(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension {a.size} != {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroNormVector("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def matching_scores(query_emb, frame_embs: Sequence) -> ScoreVector:
    """Cosine similarity of the query embedding against each frame embedding.

    Zero-norm frame embeddings are treated as missing frames and score 0.
    """
    q = as_embedding(query_emb)
    if np.linalg.norm(q) == 0:
        raise ZeroNormVector("query embedding is all-zero")
    values = np.zeros(len(frame_embs))
    for k, emb in enumerate(frame_embs):
        e = as_embedding(emb)
        if e.shape != q.shape:
            raise DimensionMismatch(f"frame {k}: dimension {e.size} != {q.size}")
        if np.linalg.norm(e) == 0:
            logger.warning("frame %d has a zero-norm embedding; scoring it 0", k)
            continue
        values[k] = cosine_similarity(q, e)
    return ScoreVector(StreamKind.MATCHING, values, Stage.RAW)


def _center(box):
    return ((box[0] + box[2]) / 2, (box[1] + box[3]) / 2)


def relation_satisfied(subj_box, predicate: str, obj_box) -> bool:
    """Geometric test in image coordinates (y grows downward)."""
    (sx, sy), (ox, oy) = _center(subj_box), _center(obj_box)
    if predicate == "left-of":
        return sx < ox
    if predicate == "right-of":
        return sx > ox
    if predicate == "above":
        return sy < oy
    if predicate == "below":
        return sy > oy
    if predicate == "overlapping":
        w = min(subj_box[2], obj_box[2]) - max(subj_box[0], obj_box[0])
        h = min(subj_box[3], obj_box[3]) - max(subj_box[1], obj_box[1])
        return w > 0 and h > 0
    raise ValueError(f"unknown predicate {predicate!r}")


def grounding_scores(
    spec: GroundingSpec,
    detections: Iterable[Detection],
    timeline: Timeline,
    relation_bonus: float = DEFAULT_RELATION_BONUS,
) -> ScoreVector:
    """Max entity confidence per frame, optionally boosted by relation satisfaction.

    With relations, a frame's score is ``base * (1 + beta * satisfied_fraction)``
    where each relation is checked on the highest-confidence box of its entities.
    """
    if relation_bonus < 0:
        raise ValueError("relation bonus must be >= 0")
    wanted = set(spec.entities)
    # frame index -> entity -> best detection
    best: dict[int, dict[str, Detection]] = {}
    dropped = 0
    for det in detections:
        if det.entity not in wanted:
            continue
        k = timeline.nearest_index(det.t)
        if k is None:
            dropped += 1
            continue
        slot = best.setdefault(k, {})
        if det.entity not in slot or det.conf > slot[det.entity].conf:
            slot[det.entity] = det
    if dropped:
        logger.warning("discarded %d detections that do not snap to a timeline frame", dropped)

    values = np.zeros(len(timeline))
    for k, by_entity in best.items():
        base = max(d.conf for d in by_entity.values())
        if spec.relations and relation_bonus > 0:
            hits = sum(
                1
                for subj, pred, obj in spec.relations
                if subj in by_entity
                and obj in by_entity
                and relation_satisfied(by_entity[subj].box, pred, by_entity[obj].box)
            )
            base *= 1 + relation_bonus * hits / len(spec.relations)
        values[k] = base
    return ScoreVector(StreamKind.GROUNDING, values, Stage.RAW)


def context_scores(
    query_emb, aligned_subs: Sequence[Optional[str]], sub_embs: Mapping[str, object]
) -> ScoreVector:
    """Query/subtitle cosine similarity per frame; exactly 0 where no subtitle covers the frame."""
    values = np.zeros(len(aligned_subs))
    cache: dict[str, float] = {}
    for k, text in enumerate(aligned_subs):
        if text is None:
            continue
        if text not in cache:
            if text not in sub_embs:
                raise MissingSubtitleEmbedding(f"no embedding for subtitle {text!r}")
            cache[text] = cosine_similarity(query_emb, sub_embs[text])
        values[k] = cache[text]
    return ScoreVector(StreamKind.CONTEXT, values, Stage.RAW)


def scores_on_timeline(
    entries: Iterable[tuple[float, float]], timeline: Timeline, stream: StreamKind
) -> ScoreVector:
    """Place ``(t, score)`` records on the timeline; frames without a record score 0."""
    values = np.zeros(len(timeline))
    for t, score in entries:
        k = timeline.nearest_index(t)
        if k is None:
            logger.warning("score at t=%s does not snap to a timeline frame; dropped", t)
            continue
        values[k] = score
    return ScoreVector(stream, values, Stage.RAW)


def embeddings_on_timeline(entries: Iterable[tuple[float, np.ndarray]], timeline: Timeline, dim: int):
    """Frame embeddings aligned to the timeline; unmatched frames get zero vectors."""
    out = [np.zeros(dim) for _ in range(len(timeline))]
    for t, vec in entries:
        k = timeline.nearest_index(t)
        if k is not None:
            out[k] = vec
    return out


# --- ingestion ---------------------------------------------------------------

SCHEMAS = ("scores", "detections", "embeddings", "text_embeddings")
MAX_MALFORMED_FRACTION = 0.10


def _time(rec) -> float:
    t = rec["t"]
    if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t) or t < 0:
        raise SchemaViolation(f"bad timestamp {t!r}")
    return float(t)


def _vector(raw) -> np.ndarray:
    if not isinstance(raw, list) or not raw:
        raise SchemaViolation("vec must be a non-empty list")
    v = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(v)):
        raise SchemaViolation("vec has non-finite entries")
    return v


def _parse_record(rec, schema: str):
    if not isinstance(rec, dict):
        raise SchemaViolation("record is not a JSON object")
    try:
        if schema == "scores":
            score = rec["score"]
            if isinstance(score, bool) or not isinstance(score, (int, float)) or not math.isfinite(score):
                raise SchemaViolation(f"bad score {score!r}")
            return (_time(rec), float(score))
        if schema == "detections":
            try:
                return Detection(_time(rec), str(rec["entity"]), float(rec["conf"]), tuple(rec["box"]))
            except (TypeError, ValueError) as exc:
                raise SchemaViolation(str(exc)) from exc
        if schema == "embeddings":
            # a record without "t" is the query embedding
            return (_time(rec) if "t" in rec else None, _vector(rec["vec"]))
        if schema == "text_embeddings":
            if not isinstance(rec["text"], str):
                raise SchemaViolation("text must be a string")
            return (rec["text"], _vector(rec["vec"]))
    except KeyError as exc:
        raise SchemaViolation(f"missing field {exc}") from exc
    raise ValueError(f"unknown schema {schema!r}")


def ingest_stream(source: Union[str, Path, Iterable[str]], schema: str) -> list:
    """Read line-delimited JSON records of the given schema.

    ``source`` is a path or an iterable of lines. Malformed lines are skipped
    with a warning; the whole input is rejected if more than 10% are malformed.
    """
    if schema not in SCHEMAS:
        raise ValueError(f"schema must be one of {SCHEMAS}")
    if isinstance(source, (str, Path)):
        try:
            lines = Path(source).read_text(encoding="utf-8-sig").splitlines()
        except OSError as exc:
            raise IoFailure(f"cannot read {source}: {exc}") from exc
    else:
        lines = list(source)

    records, errors, total = [], [], 0
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        total += 1
        try:
            records.append(_parse_record(json.loads(line), schema))
        except (json.JSONDecodeError, SchemaViolation) as exc:
            errors.append(f"line {n}: {exc}")
    if errors:
        for e in errors:
            logger.warning("%s ingest: %s", schema, e)
        if len(errors) > MAX_MALFORMED_FRACTION * total:
            raise TooManyMalformedLines(f"{len(errors)} of {total} lines malformed", errors)
    return records
