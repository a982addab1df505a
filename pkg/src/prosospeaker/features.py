"""Classifier input assembly: embedding concatenation and z-score scaling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingVector

SPEAKER_DIM = 192
PROSODY_DIM = 128
FEATURE_DIM = SPEAKER_DIM + PROSODY_DIM

# column ranges of the combined vector used by the ablation models
SLICES = {
    "combined": slice(0, FEATURE_DIM),
    "speaker": slice(0, SPEAKER_DIM),
    "prosody": slice(SPEAKER_DIM, FEATURE_DIM),
}


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    def __len__(self):
        return self.values.size


def concat(f_s: EmbeddingVector, f_p: EmbeddingVector) -> FeatureVector:
    """``[f_s, f_p]``: speaker block first, prosody block second."""
    if f_s.kind != "speaker" or f_p.kind != "prosody":
        raise FeatureError(f"expected (speaker, prosody) embeddings, got ({f_s.kind}, {f_p.kind})")
    if len(f_s) != SPEAKER_DIM or len(f_p) != PROSODY_DIM:
        raise FeatureError(
            f"embedding lengths ({len(f_s)}, {len(f_p)}) != ({SPEAKER_DIM}, {PROSODY_DIM})")
    return FeatureVector(np.concatenate([f_s.values, f_p.values]), standardized=False)


def feature_slice(name: str) -> slice:
    try:
        return SLICES[name]
    except KeyError:
        raise FeatureError(f"unknown feature slice {name!r}; choose from {sorted(SLICES)}") from None


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension mean and population standard deviation from training rows."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise FeatureError("mean and std must be equal-length vectors")
        if np.any(std < 0):
            raise FeatureError("standard deviations must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.size

    def transform(self, X) -> np.ndarray:
        """Standardize a row or a matrix of rows; zero-variance columns map to 0."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise FeatureError(f"feature length {X.shape[-1]} != standardizer length {self.dim}")
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (X - self.mean) / safe, 0.0)

    def __call__(self, f: FeatureVector) -> FeatureVector:
        return apply_standardizer(self, f)


def fit_standardizer(train) -> Standardizer:
    X = np.asarray(train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise FeatureError("need a matrix with at least 2 training rows")
    mean = X.mean(axis=0)
    mean += (X - mean).mean(axis=0)  # second pass removes summation error
    std = np.sqrt(((X - mean) ** 2).mean(axis=0))
    # rounding in the mean must not turn a constant column into a tiny std
    std[X.max(axis=0) == X.min(axis=0)] = 0.0
    return Standardizer(mean, std)


def apply_standardizer(s: Standardizer, f) -> FeatureVector:
    if s is None:
        raise FeatureError("standardizer has not been fitted")
    if isinstance(f, FeatureVector):
        if f.standardized:
            raise FeatureError("feature vector is already standardized")
        f = f.values
    return FeatureVector(s.transform(f), standardized=True)


def feature_variance(X_standardized) -> float:
    """Scalar training variance of f: the mean of the per-dimension variances."""
    X = np.asarray(X_standardized, dtype=np.float64)
    return float(X.var(axis=0).mean())
