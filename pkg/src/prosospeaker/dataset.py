"""Manifest-driven corpora and a procedural desk-scale corpus generator."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, replace

import numpy as np

from .audio import AudioBuffer, write_wav

HEADER = ("path", "label", "system_id", "synthesis_kind", "partition")
LABELS = ("REAL", "DF")
KINDS = ("TTS", "VC", "hybrid", "none")
PARTITIONS = ("train", "dev", "test")
DF_KINDS = ("TTS", "VC", "hybrid")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    label: str
    system_id: str
    synthesis_kind: str
    partition: str

    def validate(self):
        if not self.path:
            raise ManifestError("empty path")
        if self.label not in LABELS:
            raise ManifestError(f"unknown label {self.label!r}")
        if self.synthesis_kind not in KINDS:
            raise ManifestError(f"unknown synthesis kind {self.synthesis_kind!r}")
        if self.partition not in PARTITIONS:
            raise ManifestError(f"unknown partition {self.partition!r}")
        if not self.system_id:
            raise ManifestError("empty system id")
        if (self.label == "REAL") != (self.synthesis_kind == "none"):
            raise ManifestError(
                f"label {self.label} inconsistent with synthesis kind {self.synthesis_kind}")


@dataclass(frozen=True)
class Corpus:
    records: tuple
    root: str = "."  # relative record paths resolve against this directory

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = {}
        for r in self.records:
            prev = seen.setdefault(r.path, r.partition)
            if prev != r.partition:
                raise ManifestError(f"{r.path} appears in both {prev} and {r.partition}")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def partition(self, name: str) -> "Corpus":
        return Corpus(tuple(r for r in self.records if r.partition == name), self.root)

    def resolve(self, r: ManifestRecord) -> str:
        return r.path if os.path.isabs(r.path) else os.path.join(self.root, r.path)

    def counts(self) -> dict:
        out = {p: {"REAL": 0, "DF": 0} for p in PARTITIONS}
        for r in self.records:
            out[r.partition][r.label] += 1
        return {p: c for p, c in out.items() if c["REAL"] or c["DF"]}

    @property
    def labels(self) -> list:
        return [r.label for r in self.records]


def parse_manifest(path) -> Corpus:
    """Read and validate a ``path,label,system_id,synthesis_kind,partition`` CSV."""
    path = os.fspath(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ManifestError(f"no such manifest: {path}") from None
    return parse_manifest_text(text, root=os.path.dirname(os.path.abspath(path)), source=path)


def parse_manifest_text(text: str, root: str = ".", source: str = "<manifest>") -> Corpus:
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None or tuple(h.strip() for h in header) != HEADER:
        raise ManifestError(f"{source}: header must be {','.join(HEADER)}")
    records = []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if row[0].lstrip().startswith("#"):
            continue
        if len(row) != len(HEADER):
            raise ManifestError(f"{source}:{lineno}: expected {len(HEADER)} fields, got {len(row)}")
        rec = ManifestRecord(*(c.strip() for c in row))
        try:
            rec.validate()
        except ManifestError as exc:
            raise ManifestError(f"{source}:{lineno}: {exc}") from None
        records.append(rec)
    if not records:
        raise ManifestError(f"{source}: empty corpus")
    try:
        return Corpus(tuple(records), root)
    except ManifestError as exc:
        raise ManifestError(f"{source}: {exc}") from None


def serialize_manifest(c: Corpus) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in c.records:
        w.writerow([r.path, r.label, r.system_id, r.synthesis_kind, r.partition])
    return buf.getvalue()


def write_manifest(path, c: Corpus):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(serialize_manifest(c))


def filter_by_kind(c: Corpus, kinds) -> Corpus:
    """Keep REAL records and DF records whose synthesis kind is in ``kinds``.

    ``kinds`` may be a string ("TTS", "VC", "ALL") or an iterable of kinds.
    """
    if len(c) == 0:
        raise ManifestError("cannot filter an empty corpus")
    if isinstance(kinds, str):
        kinds = DF_KINDS if kinds.upper() == "ALL" else (kinds,)
    kinds = set(kinds)
    unknown = kinds - set(DF_KINDS)
    if unknown:
        raise ManifestError(f"unknown synthesis kinds {sorted(unknown)}")
    keep = tuple(r for r in c.records if r.label == "REAL" or r.synthesis_kind in kinds)
    if not any(r.label == "DF" for r in keep):
        raise ManifestError(f"no DF records of kind {sorted(kinds)}")
    return replace(c, records=keep)


# -- procedural corpus ----------------------------------------------------------

SYNTH_RATE = 16000
SYNTH_CLASSES = (
    # name, label, system id, synthesis kind
    ("real", "REAL", "AU", "none"),
    ("tts", "DF", "TTS1", "TTS"),
    ("vc", "DF", "VC1", "VC"),
)


def _smooth_noise(rng, n, fs, cutoff_hz):
    """Low-pass Gaussian noise with unit standard deviation."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    spec[np.fft.rfftfreq(n, 1.0 / fs) > cutoff_hz] = 0.0
    out = np.fft.irfft(spec, n)
    return out / (out.std() + 1e-12)


def _syllable_envelope(rng, t, rate_hz):
    """Smooth amplitude contour: raised-cosine syllables at a jittered rate."""
    env = np.zeros_like(t)
    pos = rng.uniform(0.0, 0.1)
    while pos < t[-1]:
        width = rng.uniform(0.7, 1.3) / rate_hz
        peak = rng.uniform(0.5, 1.0)
        m = (t >= pos) & (t < pos + width)
        env[m] = np.maximum(env[m], peak * np.sin(np.pi * (t[m] - pos) / width) ** 2)
        pos += width * rng.uniform(0.8, 1.1)
    return 0.15 + env


def _step_envelope(rng, t, rate_hz):
    """Piecewise-constant amplitude: one random level per slot of ``1/rate_hz`` s."""
    idx = (t * rate_hz).astype(int)
    levels = rng.uniform(0.3, 1.0, idx.max() + 1)
    return 0.15 + levels[idx]


def _formant_gains(freqs, formants, bandwidths):
    g = np.zeros_like(freqs)
    for fc, bw in zip(formants, bandwidths):
        g += 1.0 / (1.0 + ((freqs - fc) / bw) ** 2)
    return 0.05 + g


# fixed "conversion" filter: narrow resonances foreign to every speaker; harmonics
# that glide through them under vibrato and jitter pick up a band-level flutter
VC_RESONANCES_HZ = (1100.0, 1900.0, 2700.0, 3500.0)
VC_RESONANCE_BW, VC_RESONANCE_GAIN = 40.0, 4.0


def _vc_warp(freqs):
    w = np.ones_like(freqs)
    for fc in VC_RESONANCES_HZ:
        w += VC_RESONANCE_GAIN / (1.0 + ((freqs - fc) / VC_RESONANCE_BW) ** 2)
    return w


VIB_DEPTH = (0.02, 0.04)
JITTER = 0.02
TTS_SYLLABLE_DEPTH = 1.0
NOISE_FLOOR = 0.01
OUTPUT_PEAK = 0.9


def synth_utterance(rng, kind: str, fs: int = SYNTH_RATE) -> np.ndarray:
    """One procedural utterance of class ``real``, ``tts`` or ``vc``."""
    dur = rng.uniform(2.0, 4.0)
    n = int(dur * fs)
    t = np.arange(n) / fs

    # speaker identity, drawn identically for all classes
    f0 = rng.uniform(100.0, 220.0)
    formants = (rng.uniform(500, 800), rng.uniform(1200, 2000), rng.uniform(2300, 3000))
    bandwidths = (rng.uniform(60, 120), rng.uniform(80, 160), rng.uniform(100, 200))
    tilt = rng.uniform(0.7, 0.9)
    syl_rate = rng.uniform(3.0, 5.0)

    if kind == "tts":
        # flat pitch; loudness held in phrase-length steps with shallow syllables
        pitch = np.full(n, f0)
        syl = _syllable_envelope(rng, t, syl_rate)
        amp = _step_envelope(rng, t, syl_rate / 2) * (1.0 - TTS_SYLLABLE_DEPTH
                                                       + TTS_SYLLABLE_DEPTH * syl)
    else:
        vib_rate = rng.uniform(4.0, 7.0)
        vib_depth = rng.uniform(*VIB_DEPTH)
        jitter = JITTER * _smooth_noise(rng, n, fs, 20.0)
        decl = np.linspace(1.05, 0.95, n)
        pitch = f0 * decl * (1.0 + vib_depth * np.sin(2 * np.pi * vib_rate * t
                                                       + rng.uniform(0, 2 * np.pi)) + jitter)
        amp = _syllable_envelope(rng, t, syl_rate)

    phase = 2.0 * np.pi * np.cumsum(pitch) / fs
    n_harm = int((fs / 2 - 200) // (f0 * 1.2))
    x = np.zeros(n)
    for h in range(1, n_harm + 1):
        fh = h * pitch
        gain = _formant_gains(fh, formants, bandwidths) * h ** (-tilt)
        if kind == "vc":
            gain = gain * _vc_warp(fh)
        gain = np.where(fh < fs / 2 - 100, gain, 0.0)
        x += gain * np.sin(h * phase)
    x *= amp
    x += NOISE_FLOOR * rng.standard_normal(n) * np.abs(x).max()
    return OUTPUT_PEAK * x / np.abs(x).max()


def make_synthetic_corpus(seed: int, n_per_class: int, out_dir) -> Corpus:
    """Write ``3 * n_per_class`` WAVs plus ``manifest.csv`` into ``out_dir``.

    Splits are 50/25/25 % train/dev/test within every class.
    """
    if n_per_class < 2:
        raise ManifestError("need at least 2 utterances per class")
    out_dir = os.fspath(out_dir)
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise ManifestError(f"cannot create {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise ManifestError(f"directory not writable: {out_dir}")

    rng = np.random.default_rng(seed)
    n_train = n_per_class // 2
    n_dev = n_per_class // 4
    records = []
    for name, label, sid, kind in SYNTH_CLASSES:
        parts = ["train"] * n_train + ["dev"] * n_dev + ["test"] * (n_per_class - n_train - n_dev)
        parts = [parts[i] for i in rng.permutation(n_per_class)]
        for i in range(n_per_class):
            fname = f"{name}_{i:03d}.wav"
            x = synth_utterance(rng, name)
            write_wav(os.path.join(out_dir, fname), AudioBuffer(x, SYNTH_RATE))
            records.append(ManifestRecord(fname, label, sid, kind, parts[i]))
    corpus = Corpus(tuple(records), out_dir)
    write_manifest(os.path.join(out_dir, "manifest.csv"), corpus)
    return corpus
