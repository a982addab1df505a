"""Time-frequency front-ends: STFT, HTK mel filterbank, log-mel and MFCC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer

LOG_FLOOR = 1e-10

# speaker path: 25 ms / 10 ms, prosody path: 50 ms / 12.5 ms
MFCC_WINDOW_MS = 25.0
MFCC_HOP_MS = 10.0
MEL_WINDOW_MS = 50.0
MEL_HOP_MS = 12.5
N_MELS = 80
N_MFCC = 80


class FrontEndError(ValueError):
    pass


@dataclass(frozen=True)
class Spectrogram:
    magnitudes: np.ndarray  # M x F
    window_len_ms: float
    hop_ms: float
    fft_size: int


@dataclass(frozen=True)
class MelSpectrogram:
    values: np.ndarray  # M x K, natural-log mel power

    @property
    def n_bands(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MfccMap:
    values: np.ndarray  # M x B

    @property
    def n_coeffs(self) -> int:
        return self.values.shape[1]


def ms_to_samples(ms: float, fs: int) -> int:
    return int(round(ms * fs / 1000.0))


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def num_frames(n_samples: int, win: int, hop: int) -> int:
    if n_samples < win:
        return 1
    return 1 + (n_samples - win) // hop


def frame_signal(x: np.ndarray, win: int, hop: int) -> np.ndarray:
    """Slice ``x`` into (M, win) frames; a short signal becomes one zero-padded frame."""
    if x.size < win:
        out = np.zeros((1, win))
        out[0, : x.size] = x
        return out
    m = num_frames(x.size, win, hop)
    idx = np.arange(win)[None, :] + hop * np.arange(m)[:, None]
    return x[idx]


def hann(win: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win) / win)


def _power_frames(x: np.ndarray, fs: int, window_len_ms, hop_ms, fft_size) -> np.ndarray:
    win = ms_to_samples(window_len_ms, fs)
    hop = ms_to_samples(hop_ms, fs)
    if hop <= 0:
        raise FrontEndError("hop must be positive")
    if win > fft_size:
        raise FrontEndError(f"window of {win} samples exceeds fft_size {fft_size}")
    frames = frame_signal(x, win, hop) * hann(win)
    return np.fft.rfft(frames, n=fft_size, axis=1)


def stft(a: AudioBuffer, window_len_ms: float, hop_ms: float, fft_size: int) -> Spectrogram:
    """One-sided Hann-windowed STFT magnitude, shape (M, fft_size // 2 + 1)."""
    spec = _power_frames(a.samples, a.sample_rate, window_len_ms, hop_ms, fft_size)
    return Spectrogram(np.abs(spec), window_len_ms, hop_ms, fft_size)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_centers(n_bands: int, f_min: float, f_max: float) -> np.ndarray:
    """Center frequencies (Hz) of the ``n_bands`` triangular filters."""
    pts = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_bands + 2))
    return pts[1:-1]


def mel_filterbank(n_bands: int, fft_size: int, fs: int, f_min: float = 0.0,
                   f_max: float | None = None) -> np.ndarray:
    """Triangular HTK-mel filters sampled on the FFT bin grid, shape (K, F).

    Each triangle rises linearly from the previous center to its own center,
    where it reaches 1, and falls to the next center. No area normalization.
    """
    if f_max is None:
        f_max = fs / 2.0
    if n_bands < 1:
        raise FrontEndError("need at least one mel band")
    if not 0.0 <= f_min < f_max <= fs / 2.0:
        raise FrontEndError(f"need 0 <= f_min < f_max <= fs/2, got [{f_min}, {f_max}]")

    pts = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_bands + 2))
    freqs = np.fft.rfftfreq(fft_size, d=1.0 / fs)
    left, center, right = pts[:-2, None], pts[1:-1, None], pts[2:, None]
    rising = (freqs[None, :] - left) / (center - left)
    falling = (right - freqs[None, :]) / (right - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))

    empty = np.flatnonzero(fb.sum(axis=1) <= 0.0)
    if empty.size:
        raise FrontEndError(
            f"{n_bands} mel bands too many for fft_size {fft_size}: adjacent centers "
            f"collapse between FFT bins (first empty band {empty[0]})"
        )
    return fb


def _log_mel(x: np.ndarray, fs: int, window_len_ms, hop_ms, n_bands) -> np.ndarray:
    fft_size = next_pow2(ms_to_samples(window_len_ms, fs))
    power = np.abs(_power_frames(x, fs, window_len_ms, hop_ms, fft_size)) ** 2
    fb = mel_filterbank(n_bands, fft_size, fs)
    return np.log(np.maximum(power @ fb.T, LOG_FLOOR))


def mel_spectrogram(a: AudioBuffer, window_len_ms: float = MEL_WINDOW_MS,
                    hop_ms: float = MEL_HOP_MS, n_bands: int = N_MELS) -> MelSpectrogram:
    """Log-mel power spectrogram used by the prosody encoder."""
    return MelSpectrogram(_log_mel(a.samples, a.sample_rate, window_len_ms, hop_ms, n_bands))


def dct_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Rows of the orthonormal DCT-II basis, shape (n_out, n_in)."""
    k = np.arange(n_out)[:, None]
    n = np.arange(n_in)[None, :]
    basis = np.cos(np.pi * k * (2 * n + 1) / (2 * n_in)) * np.sqrt(2.0 / n_in)
    basis[0] /= np.sqrt(2.0)
    return basis


def dct_ii(v, n_out: int | None = None) -> np.ndarray:
    """Orthonormal DCT-II along the last axis, keeping the first ``n_out`` outputs."""
    v = np.asarray(v, dtype=np.float64)
    n_in = v.shape[-1]
    if n_out is None:
        n_out = n_in
    if not 1 <= n_out <= n_in:
        raise FrontEndError(f"coefficient count {n_out} outside [1, {n_in}]")
    return v @ dct_matrix(n_in, n_out).T


def mfcc(a: AudioBuffer, window_len_ms: float = MFCC_WINDOW_MS, hop_ms: float = MFCC_HOP_MS,
         n_coeffs: int = N_MFCC, n_bands: int = N_MELS) -> MfccMap:
    """Cepstra of the 80-band log-mel spectrum on the speaker-path framing."""
    logmel = _log_mel(a.samples, a.sample_rate, window_len_ms, hop_ms, n_bands)
    return MfccMap(dct_ii(logmel, n_coeffs))
