import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import cosine_oracle
from qgate.core import Stage, StreamKind, build_timeline
from qgate.streams import (
    Detection,
    DimensionMismatch,
    GroundingSpec,
    MissingSubtitleEmbedding,
    SchemaViolation,
    TooManyMalformedLines,
    UnknownEntityInRelation,
    ZeroNormVector,
    context_scores,
    cosine_similarity,
    grounding_scores,
    ingest_stream,
    matching_scores,
    relation_satisfied,
)


def test_cosine_examples():
    assert cosine_similarity([3, 4], [3, 4]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 0], [1, 1]) == pytest.approx(0.70711, abs=1e-5)


def test_cosine_errors():
    with pytest.raises(DimensionMismatch):
        cosine_similarity([1, 0], [1, 0, 0])
    with pytest.raises(ZeroNormVector):
        cosine_similarity([0, 0], [1, 0])


vec = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=16)


@given(vec, vec, st.floats(1e-3, 1e3))
def test_cosine_scale_invariant_and_matches_oracle(a, b, lam):
    n = min(len(a), len(b))
    a, b = a[:n], b[:n]
    if np.linalg.norm(a) < 1e-6 or np.linalg.norm(b) < 1e-6:
        return
    c = cosine_similarity(a, b)
    assert -1.0 <= c <= 1.0
    assert c == pytest.approx(cosine_similarity(b, a), abs=1e-12)
    assert c == pytest.approx(cosine_similarity([lam * x for x in a], b), abs=1e-9)
    assert c == pytest.approx(float(cosine_oracle(a, b)), abs=1e-9)


def test_matching_scores_examples():
    s = matching_scores([1, 0], [[1, 0], [0, 1]])
    assert s.stream is StreamKind.MATCHING and s.stage is Stage.RAW
    assert s.values.tolist() == [1.0, 0.0]
    s = matching_scores([1, 1], [[1, 0], [2, 2], [-1, -1]])
    assert s.values.tolist() == pytest.approx([0.70711, 1.0, -1.0], abs=1e-5)
    assert matching_scores([2, 5], [[2, 5]] * 3).values.tolist() == pytest.approx([1.0] * 3)


def test_matching_zero_frame_is_missing():
    assert matching_scores([1, 0], [[0, 0], [1, 0]]).values.tolist() == [0.0, 1.0]
    with pytest.raises(DimensionMismatch):
        matching_scores([1, 0], [[1, 0, 0]])


@pytest.mark.parametrize(
    "subj, pred, obj, expected",
    [
        ((0, 0, 20, 20), "left-of", (40, 0, 60, 20), True),
        ((0, 0, 20, 20), "right-of", (40, 0, 60, 20), False),
        ((40, 0, 60, 20), "right-of", (0, 0, 20, 20), True),
        ((0, 0, 10, 10), "above", (0, 30, 10, 40), True),
        ((0, 0, 10, 10), "below", (0, 30, 10, 40), False),
        ((0, 0, 10, 10), "overlapping", (5, 5, 15, 15), True),
        ((0, 0, 10, 10), "overlapping", (10, 0, 20, 10), False),
    ],
)
def test_relation_satisfied(subj, pred, obj, expected):
    assert relation_satisfied(subj, pred, obj) is expected


def det(t, entity, conf, box=(0, 0, 10, 10)):
    return Detection(t, entity, conf, box)


def test_grounding_max_aggregation():
    tl = build_timeline(2.0, fps=1)
    spec = GroundingSpec(("cup", "woman"))
    dets = [det(1.0, "cup", 0.8), det(1.0, "Woman", 0.6), det(1.02, "cup", 0.3), det(2.0, "dog", 0.9)]
    assert grounding_scores(spec, dets, tl).values.tolist() == [0.0, 0.8, 0.0]


def test_grounding_relation_bonus():
    tl = build_timeline(1.0, fps=1)
    spec = GroundingSpec(("cup", "woman"), (("cup", "left-of", "woman"),))
    dets = [det(0.0, "cup", 0.8, (0, 0, 20, 20)), det(0.0, "woman", 0.6, (40, 0, 60, 20))]
    assert grounding_scores(spec, dets, tl, 0.5).values[0] == pytest.approx(1.2)
    # beta = 0 is pure max aggregation
    assert grounding_scores(spec, dets, tl, 0.0).values[0] == 0.8
    moved = [det(0.0, "cup", 0.8, (40, 0, 60, 20)), det(0.0, "woman", 0.6, (0, 0, 20, 20))]
    assert grounding_scores(spec, moved, tl, 0.5).values[0] == 0.8


def test_grounding_drops_detections_off_timeline():
    tl = build_timeline(10.0, timestamps=[0.0, 1.0])
    out = grounding_scores(GroundingSpec(("cup",)), [det(5.0, "cup", 0.9)], tl)
    assert out.values.tolist() == [0.0, 0.0]


def test_grounding_spec_validation():
    spec = GroundingSpec(("Cup", "cup", " Woman "))
    assert spec.entities == ("cup", "woman")
    with pytest.raises(UnknownEntityInRelation):
        GroundingSpec(("cup",), (("cup", "left-of", "woman"),))


def test_context_scores():
    q = [1.0, 0.0]
    out = context_scores(q, [None, "hi", "same", None], {"hi": [1, 1], "same": [1, 0]})
    assert out.values[0] == 0.0 and out.values[3] == 0.0
    assert out.values[1] == pytest.approx(0.70711, abs=1e-5)
    assert out.values[2] == 1.0
    assert context_scores(q, [None, "x"], {"x": [-1, 0]}).values.tolist() == [0.0, -1.0]
    with pytest.raises(MissingSubtitleEmbedding):
        context_scores(q, ["nope"], {})


def test_ingest_examples():
    assert ingest_stream(['{"t":1.0,"score":0.3}'], "scores") == [(1.0, 0.3)]
    [d] = ingest_stream(['{"t":2.0,"entity":"cup","conf":0.9,"box":[0,0,10,10]}'], "detections")
    assert d == Detection(2.0, "cup", 0.9, (0, 0, 10, 10))
    [(t, v)] = ingest_stream(['{"vec":[1,2]}'], "embeddings")
    assert t is None and v.tolist() == [1.0, 2.0]


def test_ingest_bad_conf_is_schema_violation():
    good = [json.dumps({"t": float(i), "entity": "cup", "conf": 0.5, "box": [0, 0, 1, 1]}) for i in range(19)]
    bad = '{"t":2.0,"entity":"cup","conf":1.3,"box":[0,0,10,10]}'
    assert len(ingest_stream(good + [bad], "detections")) == 19
    with pytest.raises(TooManyMalformedLines) as exc:
        ingest_stream([bad], "detections")
    assert "conf" in exc.value.errors[0]


@pytest.mark.parametrize(
    "line",
    ['{"t": -1, "score": 0.1}', '{"score": 0.1}', '{"t": 1, "score": "x"}', "[1, 2]", "{not json", '{"t": 1, "score": NaN}'],
)
def test_ingest_rejects(line):
    with pytest.raises(TooManyMalformedLines):
        ingest_stream([line], "scores")


def test_ingest_from_file(tmp_path):
    p = tmp_path / "s.jsonl"
    p.write_text('{"t": 0, "score": 1}\n\n{"t": 1, "score": 2}\n')
    assert ingest_stream(p, "scores") == [(0.0, 1.0), (1.0, 2.0)]
