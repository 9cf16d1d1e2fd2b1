"""Min-max scaling followed by the masked temperature softmax."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, OneToOneFeatureMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from .core import LengthMismatch, ScoreVector, Stage, StageViolation

DEFAULT_TEMPERATURE = 0.5


class NonFiniteInput(ValueError):
    pass


@dataclass(frozen=True)
class NormalizeConfig:
    temperature: float = DEFAULT_TEMPERATURE
    # ablation switches; the defaults are the production behavior
    masked: bool = True
    unmasked_range: bool = False

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")


def minmax_scale_values(raw: np.ndarray, support: np.ndarray | None = None) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise NonFiniteInput("raw scores must be finite")
    if raw.size == 0:
        return raw.copy()
    ref = raw if support is None or not support.any() else raw[support]
    lo, hi = ref.min(), ref.max()
    if hi == lo:
        return np.zeros_like(raw)
    return np.clip((raw - lo) / (hi - lo), 0.0, 1.0)


def minmax_scale(raw: ScoreVector, cfg: NormalizeConfig | None = None) -> ScoreVector:
    """Scale to [0, 1] using the min and max of the whole vector.

    A constant vector maps to all zeros.
    """
    if raw.stage is not Stage.RAW:
        raise StageViolation(f"expected a RAW vector, got {raw.stage.name}")
    support = raw.values > 0 if cfg is not None and cfg.unmasked_range else None
    return ScoreVector(raw.stream, minmax_scale_values(raw.values, support), Stage.SCALED)


def masked_softmax_values(scaled: np.ndarray, raw: np.ndarray, temperature: float, masked: bool = True) -> np.ndarray:
    scaled = np.asarray(scaled, dtype=float)
    raw = np.asarray(raw, dtype=float)
    if scaled.shape != raw.shape:
        raise LengthMismatch(f"scaled has {scaled.size} entries, raw has {raw.size}")
    keep = raw > 0 if masked else np.ones(raw.shape, dtype=bool)
    out = np.zeros_like(scaled)
    if not keep.any():
        return out
    z = scaled[keep] / temperature
    # shift by the max: same ratios, no overflow at small temperatures
    e = np.exp(z - z.max())
    out[keep] = e / math.fsum(e)
    return out


def masked_temperature_softmax(
    scaled: ScoreVector, raw: ScoreVector, cfg: NormalizeConfig = NormalizeConfig()
) -> ScoreVector:
    """Temperature softmax over frames with raw > 0; every other frame stays exactly 0.

    If no frame has a positive raw score the result is the all-zero vector.
    """
    if scaled.stage is not Stage.SCALED or raw.stage is not Stage.RAW:
        raise StageViolation("expected (SCALED, RAW) inputs")
    values = masked_softmax_values(scaled.values, raw.values, cfg.temperature, cfg.masked)
    return ScoreVector(raw.stream, values, Stage.NORMALIZED)


def normalize_stream(raw: ScoreVector, cfg: NormalizeConfig = NormalizeConfig()) -> ScoreVector:
    return masked_temperature_softmax(minmax_scale(raw, cfg), raw, cfg)


def normalize_values(raw, temperature: float = DEFAULT_TEMPERATURE, masked: bool = True) -> np.ndarray:
    """Array-level shortcut of :func:`normalize_stream` for a single 1-d vector."""
    raw = np.asarray(raw, dtype=float)
    return masked_softmax_values(minmax_scale_values(raw), raw, temperature, masked)


def entropy(p) -> float:
    """Shannon entropy (nats) of a distribution; zero entries contribute nothing."""
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


class MaskedSoftmaxNormalizer(OneToOneFeatureMixin, TransformerMixin, BaseEstimator):
    """Column-wise stream normalizer.

    Each column of ``X`` is one stream's raw scores over the same ``T`` frames.
    ``transform`` min-max scales every column and applies the masked
    temperature softmax, so each output column is either a distribution over
    its positive-score frames or all zeros. The transform is stateless; ``fit``
    only validates and records the number of streams.

    Parameters
    ----------
    temperature : float, default=0.5
        Softmax temperature; lower values sharpen the distribution.
    masked : bool, default=True
        Set to False for the unmasked ablation where non-positive frames
        receive probability mass too.
    """

    def __init__(self, temperature: float = DEFAULT_TEMPERATURE, masked: bool = True):
        self.temperature = temperature
        self.masked = masked

    def fit(self, X, y=None):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        validate_data(self, X, ensure_min_features=1, reset=True)
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = validate_data(self, X, reset=False)
        return np.column_stack(
            [normalize_values(X[:, j], self.temperature, self.masked) for j in range(X.shape[1])]
        )

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        tags.input_tags.allow_nan = False
        return tags


def check_stream_matrix(X, n_streams: int = 3) -> np.ndarray:
    X = check_array(X, ensure_min_samples=1)
    if X.shape[1] != n_streams:
        raise ValueError(f"expected {n_streams} stream columns, got {X.shape[1]}")
    return X
