import json

import numpy as np
import pytest

from qgate import bench
from qgate.bench import (
    InvalidLevels,
    ScenarioSpec,
    compute_metrics,
    generate_scenario,
    run_bench,
    scenario_family,
    summarize,
    temperature_sweep,
    write_report,
)
from qgate.core import StreamKind, build_timeline

TL = build_timeline(9.0, fps=1)


def test_scenarios_are_deterministic():
    a, b = generate_scenario(7), generate_scenario(7)
    assert a.window == b.window and a.query == b.query
    for k in a.raw:
        assert np.array_equal(a.raw[k].values, b.raw[k].values)
    assert generate_scenario(8).window != a.window or not np.array_equal(
        generate_scenario(8).raw[StreamKind.GROUNDING].values, a.raw[StreamKind.GROUNDING].values)


@pytest.mark.parametrize("category,kind", [("grounding", StreamKind.GROUNDING), ("matching", StreamKind.MATCHING)])
def test_relevant_stream_is_higher_inside_window(category, kind):
    for seed in range(20):
        sc = generate_scenario(seed, ScenarioSpec(category=category))
        v, m = sc.raw[kind].values, sc.window_mask
        assert v[m].mean() > v[~m].mean()
        assert v[m].min() >= 0.9 - 0.05 - 1e-12


def test_context_cue_covers_window():
    for seed in range(20):
        sc = generate_scenario(seed, ScenarioSpec(category="context"))
        ctx = sc.raw[StreamKind.CONTEXT].values
        assert np.all(ctx[sc.window_mask][:-1] > 0.8)
        assert ctx[~sc.window_mask].max(initial=0.0) <= 0.6


def test_spec_validation():
    with pytest.raises(InvalidLevels):
        ScenarioSpec(signal=0.1, noise=0.2)
    with pytest.raises(ValueError):
        ScenarioSpec(category="audio")
    with pytest.raises(ValueError):
        ScenarioSpec(window=500.0)
    with pytest.raises(ValueError):
        scenario_family("nope", range(2))


def test_families():
    mixed = scenario_family("mixed", range(6))
    assert [s.spec.category for s in mixed] == list(bench.CATEGORIES) * 2
    assert {s.spec.category for s in scenario_family("sparse_subtitle", range(3))} == {"context"}


def test_compute_metrics_examples():
    # frames 0..9, window [3, 5]
    m = compute_metrics([0, 4, 8], TL, (3.0, 5.0))
    assert m.recall_at_k == pytest.approx(1 / 3) and m.hit_at_k
    m = compute_metrics([0, 1, 9], TL, (3.0, 5.0))
    assert m.recall_at_k == 0.0 and not m.hit_at_k
    assert compute_metrics([], TL, (3.0, 5.0)).recall_at_k == 0.0


def test_k_covering_timeline_gives_window_fraction():
    sc = generate_scenario(1)
    rows = run_bench([sc], ("static",), k=len(sc.timeline))
    assert rows[0]["recall"] == pytest.approx(sc.window_mask.mean())
    assert rows[0]["hit"] == 1


def test_one_hot_gater_hits():
    sc = generate_scenario(2, ScenarioSpec(category="grounding"))
    from qgate.gate import fixed_gate
    m = bench.evaluate_strategy(sc, lambda q: fixed_gate((1, 0, 0)))
    assert m.hit_at_k and m.recall_at_k == 1.0


def test_run_bench_rows_and_validation():
    scs = scenario_family("mixed", range(3))
    rows = run_bench(scs, ("static", "heuristic"), (0.3, 0.5), 8, ("masked", "unmasked"), family="mixed")
    assert len(rows) == 3 * 2 * 2 * 2
    assert set(rows[0]) == set(bench.RESULT_FIELDS)
    for r in rows:
        assert r["w_grounding"] + r["w_matching"] + r["w_context"] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        run_bench(scs, taus=(0.0,))
    s = summarize(rows)
    assert s["schema_version"] == bench.SCHEMA_VERSION
    assert len(s["groups"]) == 2 * 2 * 2


def test_temperature_sweep_entropy_increases():
    table = temperature_sweep(scenario_family("mixed", range(30)))
    ents = [e for _, _, e in table]
    assert [t for t, _, _ in table] == list(bench.DEFAULT_TAUS)
    assert all(a < b for a, b in zip(ents, ents[1:]))


def test_reports_are_reproducible(tmp_path):
    rows = run_bench(scenario_family("mixed", range(4)), family="mixed")
    a = write_report(rows, tmp_path / "a")
    b = write_report(run_bench(scenario_family("mixed", range(4)), family="mixed"), tmp_path / "b")
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes()
    assert json.loads(a[1].read_text())["groups"]
    assert a[0].read_text().splitlines()[0].split(",") == list(bench.RESULT_FIELDS)
