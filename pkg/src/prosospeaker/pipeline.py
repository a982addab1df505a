"""End-to-end glue: audio file -> combined feature vector -> scores."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .audio import TARGET_RATE, AudioBuffer, degrade, load_wav, resample
from .dsp import mel_spectrogram, mfcc
from .embeddings import WeightArchive, prosody_embed, speaker_embed
from .features import FeatureVector, concat

log = logging.getLogger(__name__)

WORKERS_ENV = "PROSOSPEAK_WORKERS"


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, requested or 1)


def prepare(a: AudioBuffer, profile: str = "none") -> AudioBuffer:
    """Resample to 16 kHz, then apply the degradation profile."""
    return degrade(resample(a, TARGET_RATE), profile)


def embed(a: AudioBuffer, speaker_w: WeightArchive, prosody_w: WeightArchive):
    """Speaker and prosody embeddings of a 16 kHz buffer."""
    f_s = speaker_embed(mfcc(a), speaker_w)
    f_p = prosody_embed(mel_spectrogram(a), prosody_w)
    return f_s, f_p


def extract_file(path, speaker_w: WeightArchive, prosody_w: WeightArchive,
                 profile: str = "none") -> FeatureVector:
    a = prepare(load_wav(path), profile)
    return concat(*embed(a, speaker_w, prosody_w))


def extract_many(paths, speaker_w, prosody_w, profile: str = "none", workers: int = 1):
    """Feature matrix for ``paths`` in order; raises on the first failure."""
    def one(p):
        return extract_file(p, speaker_w, prosody_w, profile).values

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, paths))
    else:
        rows = [one(p) for p in paths]
    return np.vstack(rows)
