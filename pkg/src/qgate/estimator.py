"""Scikit-learn style front end for query-gated keyframe selection."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, validate_data

from .core import Query
from .gate import HeuristicConfig, ScriptedGater, fixed_gate, heuristic_gate, llm_gate, static_gate
from .normalize import DEFAULT_TEMPERATURE, normalize_values
from .selection import fuse_values, top_k_indices

GATERS = ("static", "heuristic", "llm", "scripted")


class QGateSelector(BaseEstimator):
    """Select the ``k`` frames most relevant to a query from three expert streams.

    ``X`` has shape ``(n_frames, 3)`` with raw grounding, matching and context
    scores as columns, rows in temporal order. ``fit`` resolves the gating
    weights for the query; ``transform`` returns the normalized streams,
    ``score_frames`` the fused score per frame and ``predict`` the selected
    frame indices in temporal order.

    Parameters
    ----------
    gater : {"static", "heuristic", "llm", "scripted"}, default="heuristic"
    k : int, default=8
    temperature : float, default=0.5
    masked : bool, default=True
        False switches to the unmasked-softmax ablation.
    chat : callable, optional
        ``chat(system_text, user_text) -> str``; required for ``gater="llm"``.
    weights : tuple of 3 floats, optional
        Fixed weights, used when ``gater="scripted"`` and the query has no
        category in the scripted table.
    heuristic : HeuristicConfig, optional

    Attributes
    ----------
    weights_ : GatingWeights
    decision_ : GaterDecision
    n_features_in_ : int
    """

    def __init__(
        self,
        gater: str = "heuristic",
        k: int = 8,
        temperature: float = DEFAULT_TEMPERATURE,
        masked: bool = True,
        chat=None,
        weights=None,
        heuristic=None,
    ):
        self.gater = gater
        self.k = k
        self.temperature = temperature
        self.masked = masked
        self.chat = chat
        self.weights = weights
        self.heuristic = heuristic

    def _decide(self, query: Query):
        cfg = self.heuristic or HeuristicConfig()
        if self.gater == "static":
            return static_gate()
        if self.gater == "heuristic":
            return heuristic_gate(query, cfg)
        if self.gater == "llm":
            if self.chat is None:
                raise ValueError("gater='llm' needs a chat callable")
            return llm_gate(query, self.chat, cfg)
        if self.gater == "scripted":
            if self.weights is not None:
                return fixed_gate(self.weights)
            return ScriptedGater()(query)
        raise ValueError(f"gater must be one of {GATERS}, got {self.gater!r}")

    def fit(self, X, y=None, query=None):
        """Validate ``X`` and compute gating weights for ``query`` (a str or Query)."""
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("k must be a positive integer")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        validate_data(self, X, ensure_min_samples=1)
        if self.n_features_in_ != 3:
            raise ValueError(f"expected 3 stream columns, got {self.n_features_in_}")
        if query is None:
            if self.gater in ("heuristic", "llm"):
                raise ValueError(f"gater={self.gater!r} needs a query")
            query = Query("unspecified")
        elif isinstance(query, str):
            query = Query(query)
        self.decision_ = self._decide(query)
        self.weights_ = self.decision_.weights
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        X = validate_data(self, X, reset=False)
        return np.column_stack(
            [normalize_values(X[:, j], self.temperature, self.masked) for j in range(3)]
        )

    def score_frames(self, X):
        N = self.transform(X)
        return fuse_values(self.weights_.as_tuple(), N[:, 0], N[:, 1], N[:, 2])

    def predict(self, X):
        return np.asarray(top_k_indices(self.score_frames(X), int(self.k)), dtype=int)

    def fit_predict(self, X, y=None, query=None):
        return self.fit(X, y, query=query).predict(X)
