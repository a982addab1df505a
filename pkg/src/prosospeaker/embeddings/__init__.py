"""Speaker and prosody embedding extractors and their weight archives."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import archive
from ..dsp import MelSpectrogram, MfccMap
from . import prosody as _prosody
from . import speaker as _speaker
from .layers import gru_forward
from .prosody import ProsodyEncoderConfig
from .speaker import SpeakerEncoderConfig, attentive_stats_pool

__all__ = [
    "EmbeddingVector", "WeightArchive", "WeightError", "SpeakerEncoderConfig",
    "ProsodyEncoderConfig", "attentive_stats_pool", "gru_forward", "init_weights",
    "load_weights", "save_weights", "speaker_embed", "prosody_embed",
]

_ARCHS = {
    _speaker.ARCHITECTURE: (SpeakerEncoderConfig, _speaker.param_shapes),
    _prosody.ARCHITECTURE: (ProsodyEncoderConfig, _prosody.param_shapes),
}
KINDS = ("speaker", "prosody", "combined")


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if self.kind not in KINDS:
            raise ValueError(f"unknown embedding kind {self.kind!r}")
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("embedding must be a finite 1-D vector")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class WeightArchive:
    """Validated, immutable set of named network tensors."""

    architecture: str
    config: SpeakerEncoderConfig | ProsodyEncoderConfig
    tensors: dict = field(repr=False)
    format_version: int = archive.FORMAT_VERSION

    def __post_init__(self):
        if self.architecture not in _ARCHS:
            raise WeightError(f"unknown architecture {self.architecture!r}")
        _, shapes_of = _ARCHS[self.architecture]
        expected = shapes_of(self.config)
        frozen = {}
        for name, shape in expected.items():
            if name not in self.tensors:
                raise WeightError(f"missing tensor {name!r} (expected shape {shape})")
            t = np.asarray(self.tensors[name], dtype=np.float64)
            if t.shape != tuple(shape):
                raise WeightError(
                    f"tensor {name!r} has shape {t.shape}, expected {tuple(shape)}")
            if not np.all(np.isfinite(t)):
                raise WeightError(f"tensor {name!r} contains NaN or Inf")
            t.setflags(write=False)
            frozen[name] = t
        extra = sorted(set(self.tensors) - set(expected))
        if extra:
            raise WeightError(f"unexpected tensors for {self.architecture}: {extra}")
        object.__setattr__(self, "tensors", frozen)

    def __getitem__(self, name):
        return self.tensors[name]

    @property
    def metadata(self) -> dict:
        return {"architecture": self.architecture, "config": self.config.to_dict(),
                "format_version": self.format_version}


def init_weights(architecture: str, config=None, seed: int = 0) -> WeightArchive:
    """Seeded random weights, each matrix scaled by 1/sqrt(fan_in).

    Batch-norm layers get mildly perturbed affine parameters and unit
    running statistics.
    """
    if architecture not in _ARCHS:
        raise WeightError(f"unknown architecture {architecture!r}")
    cfg_cls, shapes_of = _ARCHS[architecture]
    cfg = config if config is not None else cfg_cls()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in shapes_of(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gamma":
            t = 1.0 + 0.1 * rng.standard_normal(shape)
        elif leaf in ("beta", "mean"):
            t = 0.1 * rng.standard_normal(shape)
        elif leaf == "var":
            t = rng.uniform(0.5, 1.5, shape)
        elif len(shape) == 1:  # bias
            t = 0.1 * rng.standard_normal(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            t = rng.standard_normal(shape) / np.sqrt(fan_in)
        # round through float32 so in-memory and reloaded archives agree exactly
        tensors[name] = t.astype(np.float32).astype(np.float64)
    return WeightArchive(architecture, cfg, tensors)


def save_weights(path, w: WeightArchive):
    archive.save(path, w.tensors, w.metadata, dtype="<f4")


def load_weights(path) -> WeightArchive:
    tensors, meta = archive.load(path)
    version = meta.get("format_version", archive.FORMAT_VERSION)
    if version not in archive.SUPPORTED_VERSIONS:
        raise WeightError(f"unsupported weight format version {version}")
    arch = meta.get("architecture")
    if arch not in _ARCHS:
        raise WeightError(f"archive declares unknown architecture {arch!r}")
    cfg = _ARCHS[arch][0].from_dict(meta["config"])
    return WeightArchive(arch, cfg, tensors, version)


def _check_arch(w: WeightArchive, arch: str, cfg):
    if w.architecture != arch:
        raise WeightError(f"expected {arch} weights, got {w.architecture}")
    if cfg is not None and cfg != w.config:
        raise WeightError(f"encoder config {cfg} does not match archive config {w.config}")


def speaker_embed(m: MfccMap, w: WeightArchive, cfg=None) -> EmbeddingVector:
    _check_arch(w, _speaker.ARCHITECTURE, cfg)
    values = m.values if isinstance(m, MfccMap) else m
    emb, _ = _speaker.speaker_forward(values, w.tensors, w.config)
    return EmbeddingVector(emb, "speaker")


def prosody_embed(m: MelSpectrogram, w: WeightArchive, cfg=None) -> EmbeddingVector:
    _check_arch(w, _prosody.ARCHITECTURE, cfg)
    values = m.values if isinstance(m, MelSpectrogram) else m
    return EmbeddingVector(_prosody.prosody_forward(values, w.tensors, w.config), "prosody")
