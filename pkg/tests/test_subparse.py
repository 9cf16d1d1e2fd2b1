import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qgate.core import build_timeline
from qgate.subparse import (
    EmptyTrack,
    SubtitleCue,
    SubtitleFormat,
    SubtitleTrack,
    align_track,
    cue_at,
    parse_subtitles,
    read_subtitles,
    to_srt,
)


def cues_as_dicts(track):
    return [{"start": c.start, "end": c.end, "text": c.text} for c in track.cues]


def test_srt_single_cue():
    track = parse_subtitles("1\n00:00:01,000 --> 00:00:03,500\nHello world\n")
    assert track.source_format is SubtitleFormat.SRT
    assert track.cues == (SubtitleCue(1.0, 3.5, "Hello world"),)


def test_webvtt_short_timestamps_and_tags():
    track = parse_subtitles("WEBVTT\n\n00:10.000 --> 00:12.250\n<i>music</i>\n")
    assert track.source_format is SubtitleFormat.WEBVTT
    assert track.cues == (SubtitleCue(10.0, 12.25, "music"),)


def test_multiline_text_collapses():
    track = parse_subtitles("1\n00:00:01,000 --> 00:00:02,000\nLine A\nLine B\n")
    assert track.cues[0].text == "Line A Line B"


def test_malformed_block_skipped_with_warning():
    content = (
        "1\n00:00:01,000 --> 00:00:02,000\nok\n\n"
        "2\n00:00:0x,000 --> 00:00:04,000\nbad\n\n"
        "3\n00:00:05,000 --> 00:00:06,000\nalso ok\n"
    )
    track = parse_subtitles(content)
    assert [c.text for c in track.cues] == ["ok", "also ok"]
    assert len(track.warnings) == 1


def test_empty_track_is_distinct_error():
    with pytest.raises(EmptyTrack):
        parse_subtitles("")
    with pytest.raises(EmptyTrack) as exc:
        parse_subtitles("1\nnot a timing line\ntext\n")
    assert exc.value.warnings


def test_format_hint_overrides_detection():
    track = parse_subtitles("00:01.000 --> 00:02.000\nhi\n", format_hint="webvtt")
    assert track.source_format is SubtitleFormat.WEBVTT
    assert track.cues[0].start == 1.0


@pytest.mark.parametrize("name", ["sample.srt", "sample.vtt"])
def test_fixture_conformance(fixtures_dir, name):
    path = fixtures_dir / "subs" / name
    expected = json.loads((fixtures_dir / "subs" / f"{name}.expected.json").read_text(encoding="utf-8"))
    assert cues_as_dicts(read_subtitles(path)) == expected


def test_cue_at_examples():
    track = SubtitleTrack((SubtitleCue(1.0, 3.5, "Hello"),))
    assert cue_at(track, 2.0) == "Hello"
    assert cue_at(track, 5.0) is None
    overlap = SubtitleTrack((SubtitleCue(3, 6, "B"), SubtitleCue(1, 4, "A")))
    assert cue_at(overlap, 3.5) == "A B"


def test_cue_boundary_is_end_exclusive():
    track = SubtitleTrack((SubtitleCue(1.0, 3.0, "x"),))
    assert cue_at(track, 1.0) == "x"
    assert cue_at(track, 3.0) is None


def test_align_track_examples():
    one = SubtitleTrack((SubtitleCue(0.5, 1.5, "x"),))
    assert align_track(one, build_timeline(2.0, fps=1)) == [None, "x", None]
    assert align_track(SubtitleTrack(()), build_timeline(2.0, fps=1)) == [None] * 3
    full = SubtitleTrack((SubtitleCue(0, 5, "a"),))
    assert align_track(full, build_timeline(4.0, timestamps=[0, 2, 4])) == ["a", "a", "a"]


def test_srt_round_trip(fixtures_dir):
    track = read_subtitles(fixtures_dir / "subs" / "sample.srt")
    again = parse_subtitles(to_srt(track))
    assert again.cues == track.cues


cue_strategy = st.builds(
    lambda start_ms, length_ms, text: SubtitleCue(start_ms / 1000, (start_ms + length_ms) / 1000, text),
    st.integers(0, 10_000_000),
    st.integers(1, 100_000),
    st.text(alphabet="abcdefghij XYZ?!", min_size=1).map(lambda s: " ".join(s.split()) or "x"),
)


@given(st.lists(cue_strategy, min_size=1, max_size=20))
def test_round_trip_property(cues):
    track = SubtitleTrack(tuple(cues))
    assert parse_subtitles(to_srt(track)).cues == track.cues


@given(st.lists(cue_strategy, max_size=10), st.floats(1, 500), st.floats(0.1, 5))
def test_align_length_matches_timeline(cues, duration, fps):
    tl = build_timeline(duration, fps=fps)
    assert len(align_track(SubtitleTrack(tuple(cues)), tl)) == len(tl)
