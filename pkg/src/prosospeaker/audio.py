"""Speech recording I/O, resampling and codec-surrogate degradation."""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.io import wavfile
from scipy.signal import firwin, resample_poly

TARGET_RATE = 16000

# taps per polyphase branch and Kaiser shape of the anti-aliasing filter
RESAMPLE_TAPS_PER_PHASE = 64
RESAMPLE_KAISER_BETA = 8.0


class AudioError(ValueError):
    """Raised for unreadable, unsupported or invalid audio."""


@dataclass(frozen=True)
class AudioBuffer:
    """Mono recording with samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise AudioError(f"audio must be mono, got shape {x.shape}")
        if x.size == 0:
            raise AudioError("zero-length audio")
        if not np.all(np.isfinite(x)):
            raise AudioError("audio contains non-finite samples")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise AudioError(f"invalid sample rate {self.sample_rate!r}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class DegradationProfile:
    """Low-pass plus amplitude-quantization stand-in for a lossy codec bitrate."""

    label: str
    cutoff_hz: float
    quant_levels: int

    def validate(self, sample_rate: int):
        if self.label not in PROFILES:
            raise AudioError(f"unknown degradation profile {self.label!r}")
        if self.label == "none":
            return
        if not 0 < self.cutoff_hz < sample_rate / 2:
            raise AudioError(
                f"profile {self.label}: cutoff {self.cutoff_hz} Hz must lie below "
                f"Nyquist ({sample_rate / 2} Hz)"
            )
        if self.quant_levels < 2:
            raise AudioError(f"profile {self.label}: quant_levels must be >= 2")


PROFILES = {
    "none": DegradationProfile("none", float("inf"), 2**32),
    "br128": DegradationProfile("br128", 7000.0, 4096),
    "br64": DegradationProfile("br64", 5500.0, 1024),
    "br32": DegradationProfile("br32", 4000.0, 256),
}


def get_profile(label: str) -> DegradationProfile:
    try:
        return PROFILES[label]
    except KeyError:
        raise AudioError(
            f"unknown degradation profile {label!r}; choose from {sorted(PROFILES)}"
        ) from None


def load_wav(path) -> AudioBuffer:
    """Read a PCM/float WAV file, averaging channels to mono.

    Integer PCM is scaled by ``2**(bits-1)`` so that full scale maps into
    [-1, 1); 8-bit unsigned data is re-centred first. Silence is valid.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise AudioError(f"no such file: {path}")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except (ValueError, EOFError) as exc:
        raise AudioError(f"{path}: not a supported WAV file ({exc})") from exc

    if data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        # scipy left-justifies 24-bit samples into int32
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise AudioError(f"{path}: unsupported sample encoding {data.dtype}")

    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise AudioError(f"{path}: zero-length audio")
    return AudioBuffer(x, int(rate))


def write_wav(path, a: AudioBuffer):
    """Write ``a`` as 16-bit PCM, clipping to the representable range."""
    pcm = np.clip(np.round(a.samples * 32768.0), -32768, 32767).astype("<i2")
    wavfile.write(os.fspath(path), a.sample_rate, pcm)


def _antialias_filter(up: int, down: int) -> np.ndarray:
    n_taps = RESAMPLE_TAPS_PER_PHASE * up
    if n_taps % 2 == 0:
        n_taps += 1  # odd length keeps the group delay an integer
    return firwin(n_taps, 1.0 / max(up, down), window=("kaiser", RESAMPLE_KAISER_BETA))


def resample(a: AudioBuffer, target_fs: int) -> AudioBuffer:
    """Band-limited rational resampling with a Kaiser-windowed sinc."""
    if target_fs <= 0:
        raise AudioError(f"target rate must be positive, got {target_fs}")
    if target_fs == a.sample_rate:
        return a
    ratio = Fraction(int(target_fs), a.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    y = resample_poly(a.samples, up, down, window=_antialias_filter(up, down))
    return AudioBuffer(y, int(target_fs))


def _lowpass(x: np.ndarray, cutoff_hz: float, fs: int) -> np.ndarray:
    # brick-wall in the DFT domain: exact stop-band, energy can only drop
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, d=1.0 / fs)
    spec[freqs > cutoff_hz] = 0.0
    return np.fft.irfft(spec, n=x.size)


def _quantize(x: np.ndarray, levels: int) -> np.ndarray:
    # truncation toward zero so that |q(x)| <= |x| sample-wise
    step = 2.0 / levels
    return np.sign(x) * np.floor(np.abs(x) / step) * step


def degrade(a: AudioBuffer, p: DegradationProfile | str) -> AudioBuffer:
    """Apply a codec-surrogate degradation; profile ``none`` is the identity."""
    if isinstance(p, str):
        p = get_profile(p)
    p.validate(a.sample_rate)
    if p.label == "none":
        return a
    y = _lowpass(a.samples, p.cutoff_hz, a.sample_rate)
    y = _quantize(y, p.quant_levels)
    return AudioBuffer(y, a.sample_rate)
