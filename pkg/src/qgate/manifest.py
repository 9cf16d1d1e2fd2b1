"""JSON manifest serialization for selection results."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Union

from .core import GatingWeights, SelectedFrame, SelectionResult, WeightSource


def result_to_dict(result: SelectionResult) -> dict:
    w = result.weights
    return {
        "query_id": result.query_id,
        "weights": {
            "grounding": w.grounding,
            "matching": w.matching,
            "context": w.context,
            "source": w.source.value,
        },
        "frames": [
            {"t": f.t, "mmss": f.mmss, "score": f.score, "subtitle": f.subtitle}
            for f in result.frames
        ],
        "prompt_text": result.prompt_text,
    }


def result_from_dict(data: dict) -> SelectionResult:
    w = data["weights"]
    weights = GatingWeights(w["grounding"], w["matching"], w["context"], WeightSource(w["source"]))
    frames = tuple(
        SelectedFrame(float(f["t"]), f["mmss"], float(f["score"]), f.get("subtitle"))
        for f in data["frames"]
    )
    return SelectionResult(str(data["query_id"]), weights, frames, data["prompt_text"])


def dumps(result: SelectionResult) -> str:
    return json.dumps(result_to_dict(result), indent=2, ensure_ascii=False) + "\n"


def write_manifest(result: SelectionResult, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps(result), encoding="utf-8")


def read_manifest(path: Union[str, Path]) -> SelectionResult:
    return result_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
