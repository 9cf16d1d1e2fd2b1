"""Command-line entry point: ``qgate <subcommand>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import bench, manifest
from .clients import ClientError, EndpointConfig, OpenAICompatClient, extract_entities
from .core import EXPERT_STREAMS, QGateError, Query, StreamKind, Timeline, build_timeline
from .gate import HeuristicConfig, ScriptedGater, fixed_gate, heuristic_gate, llm_gate, static_gate
from .normalize import NormalizeConfig, normalize_values
from .pipeline import PipelineTrace, select_keyframes
from .selection import SelectionConfig
from .streams import (
    DEFAULT_RELATION_BONUS,
    GroundingSpec,
    context_scores,
    embeddings_on_timeline,
    grounding_scores,
    ingest_stream,
    matching_scores,
    scores_on_timeline,
)
from .subparse import EmptyTrack, SubtitleTrack, align_track, read_subtitles, to_srt

logger = logging.getLogger("qgate")

CONFIG_SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_INGEST, EXIT_GATER, EXIT_IO = 0, 2, 3, 4, 5
GATER_CHOICES = ("static", "heuristic", "llm", "scripted")


class ConfigInvalid(QGateError):
    exit_code = EXIT_CONFIG


class IngestFailure(QGateError):
    exit_code = EXIT_INGEST


class GaterFailure(QGateError):
    exit_code = EXIT_GATER


class CliIoFailure(QGateError):
    exit_code = EXIT_IO


@dataclass
class PipelineConfig:
    base_dir: Path
    query: Query
    timeline: Timeline
    streams: dict = field(default_factory=dict)
    subtitles: Optional[Path] = None
    require: tuple[str, ...] = ()
    tau: float = 0.5
    k: int = 8
    gater: str = "heuristic"
    gater_weights: Optional[tuple[float, float, float]] = None
    relation_bonus: float = DEFAULT_RELATION_BONUS
    endpoint: dict = field(default_factory=dict)
    output: Optional[Path] = None

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def load_config(path, overrides: Optional[dict] = None) -> PipelineConfig:
    """Parse and validate a schema-versioned JSON pipeline config."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliIoFailure(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not valid JSON: {exc}") from exc
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if data.get("schema_version") != CONFIG_SCHEMA_VERSION:
        raise ConfigInvalid(f"unsupported config schema_version {data.get('schema_version')!r}")
    try:
        q = data["query"]
        query = Query(q["text"], str(q.get("id", "q0")), q.get("category"))
        tl = data["timeline"]
        timeline = build_timeline(float(tl["duration"]), fps=tl.get("fps"), timestamps=tl.get("timestamps"))
        gater = data.get("gater", {})
        if isinstance(gater, str):
            gater = {"kind": gater}
        cfg = PipelineConfig(
            base_dir=path.parent,
            query=query,
            timeline=timeline,
            streams=dict(data.get("streams", {})),
            subtitles=Path(data["subtitles"]) if data.get("subtitles") else None,
            require=tuple(data.get("require", ())) + tuple(overrides.get("require", ())),
            tau=float(overrides.get("tau", data.get("normalize", {}).get("tau", 0.5))),
            k=int(overrides.get("k", data.get("selection", {}).get("k", 8))),
            gater=overrides.get("gater", gater.get("kind", "heuristic")),
            gater_weights=tuple(gater["weights"]) if "weights" in gater else None,
            relation_bonus=float(data.get("relation_bonus", DEFAULT_RELATION_BONUS)),
            endpoint=dict(data.get("endpoint", {})),
            output=Path(overrides["out"]) if "out" in overrides else (Path(data["output"]) if data.get("output") else None),
        )
    except (KeyError, TypeError, ValueError, QGateError) as exc:
        raise ConfigInvalid(f"invalid config: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: PipelineConfig) -> None:
    if cfg.gater not in GATER_CHOICES:
        raise ConfigInvalid(f"gater must be one of {GATER_CHOICES}, got {cfg.gater!r}")
    if cfg.gater == "scripted" and cfg.gater_weights is None and not cfg.query.category:
        raise ConfigInvalid("scripted gater needs weights or a query category")
    if cfg.k < 1 or not cfg.tau > 0:
        raise ConfigInvalid("k must be >= 1 and tau > 0")
    unknown = set(cfg.streams) - {k.label for k in EXPERT_STREAMS}
    if unknown:
        raise ConfigInvalid(f"unknown streams {sorted(unknown)}")
    referenced = [cfg.subtitles] if cfg.subtitles else []
    for spec in cfg.streams.values():
        for key in ("scores", "detections", "frame_embeddings", "query_embedding", "subtitle_embeddings"):
            if key in spec:
                referenced.append(Path(spec[key]))
    missing = [str(p) for p in referenced if not cfg.path(p).is_file()]
    if missing:
        raise ConfigInvalid(f"missing input files: {missing}")
    for name in cfg.require:
        if name not in {k.label for k in EXPERT_STREAMS}:
            raise ConfigInvalid(f"cannot require unknown stream {name!r}")
        if name not in cfg.streams:
            raise ConfigInvalid(f"stream {name!r} is required but has no inputs")
        if name == "context" and "scores" not in cfg.streams[name] and cfg.subtitles is None:
            raise ConfigInvalid("context stream is required but no subtitle file is configured")


def _client(cfg: PipelineConfig) -> OpenAICompatClient:
    ep = cfg.endpoint
    kwargs = {k: ep[k] for k in ("base_url", "timeout", "max_retries", "temperature", "backoff") if k in ep}
    if "model" in ep:
        kwargs["model_name"] = ep["model"]
    return OpenAICompatClient(EndpointConfig.from_env(**kwargs))


def _query_embedding(cfg: PipelineConfig, spec: dict):
    recs = ingest_stream(cfg.path(spec["query_embedding"]), "embeddings")
    qs = [v for t, v in recs if t is None]
    if len(qs) != 1:
        raise IngestFailure("query embedding file must hold exactly one record without 't'")
    return qs[0]


def load_subtitles(cfg: PipelineConfig) -> SubtitleTrack:
    if cfg.subtitles is None:
        return SubtitleTrack(())
    try:
        return read_subtitles(cfg.path(cfg.subtitles))
    except EmptyTrack:
        logger.warning("subtitle file has no cues; context stream will be all zero")
        return SubtitleTrack(())


def compute_raw_streams(cfg: PipelineConfig, aligned, chat=None) -> dict:
    """Raw per-stream vectors from whatever inputs the config provides."""
    tl, T = cfg.timeline, len(cfg.timeline)
    raw = {}
    for kind in EXPERT_STREAMS:
        spec = cfg.streams.get(kind.label)
        if not spec:
            logger.warning("no inputs for %s stream; using an all-zero vector", kind.label)
            continue
        if "scores" in spec:
            raw[kind] = scores_on_timeline(ingest_stream(cfg.path(spec["scores"]), "scores"), tl, kind)
        elif kind is StreamKind.GROUNDING:
            dets = ingest_stream(cfg.path(spec["detections"]), "detections")
            if "entities" in spec:
                gspec = GroundingSpec(tuple(spec["entities"]), tuple(tuple(r) for r in spec.get("relations", ())))
            else:
                gspec = extract_entities(cfg.query, chat)
            raw[kind] = grounding_scores(gspec, dets, tl, cfg.relation_bonus)
        elif kind is StreamKind.MATCHING:
            q = _query_embedding(cfg, spec)
            frames = ingest_stream(cfg.path(spec["frame_embeddings"]), "embeddings")
            raw[kind] = matching_scores(q, embeddings_on_timeline(((t, v) for t, v in frames if t is not None), tl, q.size))
        else:
            q = _query_embedding(cfg, spec)
            sub_embs = dict(ingest_stream(cfg.path(spec["subtitle_embeddings"]), "text_embeddings"))
            raw[kind] = context_scores(q, aligned, sub_embs)
    for kind, vec in raw.items():
        if len(vec) != T:
            raise IngestFailure(f"{kind.label} stream length {len(vec)} != {T}")
    return raw


def make_gater(cfg: PipelineConfig, chat=None):
    if cfg.gater == "static":
        return lambda q: static_gate()
    if cfg.gater == "heuristic":
        return lambda q: heuristic_gate(q, HeuristicConfig())
    if cfg.gater == "scripted":
        if cfg.gater_weights is not None:
            return lambda q: fixed_gate(cfg.gater_weights)
        return ScriptedGater()
    return lambda q: llm_gate(q, chat, HeuristicConfig())


def run_pipeline(cfg: PipelineConfig) -> PipelineTrace:
    track = load_subtitles(cfg)
    aligned = align_track(track, cfg.timeline)
    chat = None
    needs_chat = cfg.gater == "llm" or (
        "grounding" in cfg.streams and "detections" in cfg.streams["grounding"]
        and "entities" not in cfg.streams["grounding"]
    )
    if needs_chat:
        chat = _client(cfg)
    try:
        try:
            raw = compute_raw_streams(cfg, aligned, chat)
        except (OSError, UnicodeDecodeError) as exc:
            raise CliIoFailure(str(exc)) from exc
        except (ClientError, ConfigInvalid, CliIoFailure):
            raise
        except QGateError as exc:
            raise IngestFailure(f"{type(exc).__name__}: {exc}") from exc
        try:
            gater = make_gater(cfg, chat)
            return select_keyframes(
                raw, cfg.timeline, cfg.query, gater, aligned,
                NormalizeConfig(cfg.tau), SelectionConfig(cfg.k),
            )
        except ValueError as exc:
            raise GaterFailure(str(exc)) from exc
    finally:
        if chat is not None:
            chat.close()


def explain_dict(trace: PipelineTrace, cfg: PipelineConfig) -> dict:
    d = trace.decision
    return {
        "timeline": cfg.timeline.timestamps.tolist(),
        "raw": {k.label: v.values.tolist() for k, v in trace.raw.items()},
        "normalized": {k.label: v.values.tolist() for k, v in trace.normalized.items()},
        "fused": trace.fused.values.tolist(),
        "selected": list(trace.selected),
        "gater": {
            "weights": list(d.weights.as_tuple()),
            "source": d.weights.source.value,
            "rationale": d.rationale,
            "raw_response": d.raw_response,
        },
    }


# --- subcommands -------------------------------------------------------------

def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliIoFailure(f"cannot write {out}: {exc}") from exc


def _cfg(args) -> PipelineConfig:
    return load_config(args.config, {
        "k": args.k, "tau": args.tau, "gater": args.gater, "out": args.out,
        "require": tuple(args.require or ()),
    })


def cmd_run(args) -> int:
    cfg = _cfg(args)
    trace = run_pipeline(cfg)
    _emit(manifest.dumps(trace.result), cfg.output)
    if args.explain:
        text = json.dumps(explain_dict(trace, cfg), indent=2) + "\n"
        if cfg.output is not None:
            _emit(text, cfg.output.with_suffix(".explain.json"))
        else:
            sys.stderr.write(text)
    return EXIT_OK


def cmd_prompt(args) -> int:
    cfg = _cfg(args)
    _emit(run_pipeline(cfg).result.prompt_text, cfg.output)
    return EXIT_OK


def cmd_select(args) -> int:
    cfg = _cfg(args)
    trace = run_pipeline(cfg)
    rows = [{"index": i, "t": f.t, "mmss": f.mmss, "score": f.score} for i, f in zip(trace.selected, trace.result.frames)]
    _emit(json.dumps(rows, indent=2) + "\n", cfg.output)
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = _cfg(args)
    aligned = align_track(load_subtitles(cfg), cfg.timeline)
    chat = _client(cfg) if cfg.gater == "llm" else None
    try:
        raw = compute_raw_streams(cfg, aligned, chat)
    except QGateError as exc:
        if isinstance(exc, (ConfigInvalid, CliIoFailure)):
            raise
        raise IngestFailure(str(exc)) from exc
    T = len(cfg.timeline)
    out = {"timeline": cfg.timeline.timestamps.tolist()}
    for kind in EXPERT_STREAMS:
        out[kind.label] = raw[kind].values.tolist() if kind in raw else [0.0] * T
    _emit(json.dumps(out, indent=2) + "\n", cfg.output)
    return EXIT_OK


def cmd_normalize(args) -> int:
    try:
        recs = ingest_stream(args.scores, "scores")
    except QGateError as exc:
        raise IngestFailure(str(exc)) from exc
    recs.sort(key=lambda r: r[0])
    tau = args.tau if args.tau is not None else NormalizeConfig().temperature
    normalized = normalize_values([s for _, s in recs], tau)
    lines = [json.dumps({"t": t, "score": float(v)}) for (t, _), v in zip(recs, normalized)]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_gate(args) -> int:
    query = Query(args.query, category=args.category)
    kind = args.gater or "heuristic"
    if kind == "static":
        d = static_gate()
    elif kind == "heuristic":
        d = heuristic_gate(query)
    elif kind == "scripted":
        d = ScriptedGater()(query)
    else:
        with OpenAICompatClient(EndpointConfig.from_env()) as client:
            d = llm_gate(query, client, HeuristicConfig())
    out = {
        "grounding": d.weights.grounding, "matching": d.weights.matching, "context": d.weights.context,
        "source": d.weights.source.value, "rationale": d.rationale,
    }
    _emit(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_parse_subs(args) -> int:
    try:
        track = read_subtitles(args.file, args.format)
    except EmptyTrack as exc:
        raise IngestFailure(str(exc)) from exc
    except OSError as exc:
        raise CliIoFailure(str(exc)) from exc
    if args.srt:
        _emit(to_srt(track), args.out)
    else:
        cues = [{"start": c.start, "end": c.end, "text": c.text} for c in track.cues]
        _emit(json.dumps(cues, indent=2, ensure_ascii=False) + "\n", args.out)
    for w in track.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args) -> int:
    seeds = range(args.seed, args.seed + args.n)
    taus = tuple(args.taus) if args.taus else ((args.tau,) if args.tau else (0.5,))
    strategies = tuple(args.strategies)
    variants = ("masked", "unmasked") if args.ablate_mask else ("masked",)
    scenarios = bench.scenario_family(args.family, seeds)
    rows = bench.run_bench(scenarios, strategies, taus, args.k or 8, variants, family=args.family)
    out = args.out or Path("bench_out")
    try:
        results, summary = bench.write_report(rows, out)
    except OSError as exc:
        raise CliIoFailure(str(exc)) from exc
    print(summary.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qgate", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def pipeline_args(sp):
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--k", type=int)
        sp.add_argument("--tau", type=float)
        sp.add_argument("--gater", choices=GATER_CHOICES)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--require", action="append", metavar="STREAM",
                        help="fail with a config error if this stream has no inputs")

    sp = sub.add_parser("run", help="full pipeline; writes the manifest")
    pipeline_args(sp)
    sp.add_argument("--explain", action="store_true", help="also dump intermediate vectors")
    sp.set_defaults(func=cmd_run)

    for name, func, text in (
        ("score", cmd_score, "raw stream vectors"),
        ("select", cmd_select, "selected frames"),
        ("prompt", cmd_prompt, "rendered prompt text"),
    ):
        sp = sub.add_parser(name, help=text)
        pipeline_args(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("normalize", help="normalize one JSONL score file")
    sp.add_argument("scores", type=Path)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_normalize)

    sp = sub.add_parser("gate", help="gating weights for a query")
    sp.add_argument("query")
    sp.add_argument("--gater", choices=GATER_CHOICES)
    sp.add_argument("--category")
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_gate)

    sp = sub.add_parser("parse-subs", help="parse an SRT/WebVTT file")
    sp.add_argument("file", type=Path)
    sp.add_argument("--format", choices=("srt", "webvtt"))
    sp.add_argument("--srt", action="store_true", help="emit canonical SRT instead of JSON")
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_parse_subs)

    sp = sub.add_parser("bench", help="synthetic routing benchmark")
    sp.add_argument("--family", default="mixed", choices=("mixed", "sparse_subtitle") + bench.CATEGORIES)
    sp.add_argument("--seed", type=int, default=0, help="first seed")
    sp.add_argument("--n", type=int, default=100, help="number of seeds")
    sp.add_argument("--k", type=int)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--taus", type=float, nargs="+")
    sp.add_argument("--strategies", nargs="+", default=["static", "heuristic", "llm-stub"],
                    choices=("static", "heuristic", "llm-stub"))
    sp.add_argument("--ablate-mask", action="store_true", help="also run the unmasked softmax")
    sp.add_argument("--out", type=Path)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigInvalid, IngestFailure, GaterFailure, CliIoFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INGEST


if __name__ == "__main__":
    sys.exit(main())
