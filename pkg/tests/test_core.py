import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qgate.core import (
    EmptyOrUnsortedTimestamps,
    GatingWeights,
    NegativeTimestamp,
    NonPositiveDuration,
    Query,
    ScoreVector,
    SelectedFrame,
    SelectionResult,
    Stage,
    StageViolation,
    StreamKind,
    Timeline,
    TimestampOutOfRange,
    build_timeline,
    format_timestamp,
)


@pytest.mark.parametrize(
    "duration, fps, expected",
    [
        (3.0, 1, [0.0, 1.0, 2.0, 3.0]),
        (10.0, 0.5, [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]),
        (2.5, 1, [0.0, 1.0, 2.0]),
        (1.0, 3, [0.0, 1 / 3, 2 / 3, 1.0]),
    ],
)
def test_build_timeline_fixed_rate(duration, fps, expected):
    assert build_timeline(duration, fps=fps).timestamps.tolist() == pytest.approx(expected, abs=1e-12)


def test_build_timeline_explicit_passthrough():
    assert build_timeline(2.0, timestamps=[0.5, 1.5]).timestamps.tolist() == [0.5, 1.5]


@pytest.mark.parametrize(
    "kwargs, err",
    [
        (dict(duration=0.0, fps=1), NonPositiveDuration),
        (dict(duration=-1.0, fps=1), NonPositiveDuration),
        (dict(duration=5.0, timestamps=[]), EmptyOrUnsortedTimestamps),
        (dict(duration=5.0, timestamps=[2.0, 1.0]), EmptyOrUnsortedTimestamps),
        (dict(duration=5.0, timestamps=[1.0, 1.0]), EmptyOrUnsortedTimestamps),
        (dict(duration=5.0, timestamps=[1.0, 6.0]), TimestampOutOfRange),
        (dict(duration=5.0, timestamps=[-1.0, 2.0]), TimestampOutOfRange),
    ],
)
def test_build_timeline_errors(kwargs, err):
    with pytest.raises(err):
        build_timeline(**kwargs)


def test_build_timeline_deterministic():
    a = build_timeline(37.3, fps=2.5)
    assert a == build_timeline(37.3, fps=2.5)
    assert a.timestamps[-1] <= 37.3


def test_timeline_is_immutable():
    tl = build_timeline(3.0, fps=1)
    with pytest.raises(ValueError):
        tl.timestamps[0] = 5.0


def test_nearest_index_snaps_within_half_interval():
    tl = build_timeline(4.0, fps=1)
    assert tl.nearest_index(2.4) == 2
    assert tl.nearest_index(2.6) == 3
    assert tl.nearest_index(4.0) == 4
    tl2 = build_timeline(10.0, timestamps=[0.0, 1.0, 5.0])
    assert tl2.nearest_index(1.4) == 1
    assert tl2.nearest_index(3.5) == 2
    # past the last frame by more than half the final interval
    assert tl2.nearest_index(9.0) is None
    late = build_timeline(10.0, timestamps=[2.0, 3.0])
    assert late.nearest_index(0.0) is None
    assert late.nearest_index(1.6) == 0


@pytest.mark.parametrize("t, expected", [(0, "00:00"), (125.7, "02:05"), (3725, "62:05"), (59.999, "00:59"), (6000, "100:00")])
def test_format_timestamp(t, expected):
    assert format_timestamp(t) == expected


def test_format_timestamp_negative():
    with pytest.raises(NegativeTimestamp):
        format_timestamp(-0.1)


@given(st.floats(0, 5999, allow_nan=False), st.floats(0, 5999, allow_nan=False))
def test_format_timestamp_monotone(t1, t2):
    if math.floor(t1) < math.floor(t2):
        assert format_timestamp(t1) < format_timestamp(t2)


def test_query_rejects_blank():
    with pytest.raises(ValueError):
        Query("   ")


def test_score_vector_stage_checks():
    ScoreVector(StreamKind.CONTEXT, [0.0, 0.0], Stage.NORMALIZED)
    ScoreVector(StreamKind.CONTEXT, [0.25, 0.75], Stage.NORMALIZED)
    with pytest.raises(StageViolation):
        ScoreVector(StreamKind.CONTEXT, [0.25, 0.5], Stage.NORMALIZED)
    with pytest.raises(StageViolation):
        ScoreVector(StreamKind.MATCHING, [-0.1, 0.5], Stage.SCALED)
    raw = ScoreVector(StreamKind.MATCHING, [-0.1, 2.0], Stage.RAW)
    assert not raw.values.flags.writeable


def test_gating_weights_invariants():
    w = GatingWeights(0.2, 0.3, 0.5)
    assert w.argmax() is StreamKind.CONTEXT
    with pytest.raises(ValueError):
        GatingWeights(0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        GatingWeights(-0.1, 0.6, 0.5)


def test_selection_result_requires_temporal_order():
    w = GatingWeights(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        SelectionResult("q", w, (SelectedFrame(5.0, "00:05", 0.1), SelectedFrame(2.0, "00:02", 0.2)))
