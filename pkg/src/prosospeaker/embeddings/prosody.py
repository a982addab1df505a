"""Reference-style prosody encoder: 2-D conv stack, GRU summary, tanh projection."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .layers import batch_norm, conv2d_stride2, gru_forward, relu

ARCHITECTURE = "prosody-encoder"
N_CONV_LAYERS = 6
MIN_FRAMES = 2 ** N_CONV_LAYERS


@dataclass(frozen=True)
class ProsodyEncoderConfig:
    n_mels: int = 80
    conv_channels: tuple = (32, 32, 64, 64, 128, 128)
    gru_hidden: int = 128
    embed_dim: int = 128

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if len(self.conv_channels) != N_CONV_LAYERS:
            raise ValueError(f"prosody encoder needs exactly {N_CONV_LAYERS} conv layers")
        if min((self.n_mels, self.gru_hidden, self.embed_dim) + self.conv_channels) < 1:
            raise ValueError("all prosody encoder dimensions must be >= 1")

    @property
    def reduced_freq(self) -> int:
        f = self.n_mels
        for _ in range(N_CONV_LAYERS):
            f = (f + 1) // 2
        return f

    @property
    def gru_input_dim(self) -> int:
        return self.conv_channels[-1] * self.reduced_freq

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProsodyEncoderConfig":
        return cls(**{**d, "conv_channels": tuple(d["conv_channels"])})

    @classmethod
    def desk(cls) -> "ProsodyEncoderConfig":
        return cls(conv_channels=(8, 8, 16, 16, 32, 32), gru_hidden=64)


def param_shapes(cfg: ProsodyEncoderConfig) -> dict:
    s = {}
    c_in = 1
    for i, c_out in enumerate(cfg.conv_channels):
        s[f"conv{i}.w"] = (c_out, c_in, 3, 3)
        s[f"conv{i}.b"] = (c_out,)
        for p in ("gamma", "beta", "mean", "var"):
            s[f"bn{i}.{p}"] = (c_out,)
        c_in = c_out
    h = cfg.gru_hidden
    s["gru.w_ih"] = (3 * h, cfg.gru_input_dim)
    s["gru.w_hh"] = (3 * h, h)
    s["gru.b_ih"] = (3 * h,)
    s["gru.b_hh"] = (3 * h,)
    s["fc.w"] = (cfg.embed_dim, h)
    s["fc.b"] = (cfg.embed_dim,)
    return s


def pad_frames(mel_values) -> np.ndarray:
    """Append zero frames so the map survives six stride-2 reductions."""
    x = np.asarray(mel_values, dtype=np.float64)
    if x.shape[0] >= MIN_FRAMES:
        return x
    return np.vstack([x, np.zeros((MIN_FRAMES - x.shape[0], x.shape[1]))])


def prosody_forward(mel_values, w: dict, cfg: ProsodyEncoderConfig) -> np.ndarray:
    x = np.asarray(mel_values, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected an (M>=1, K) mel map, got shape {x.shape}")
    if x.shape[1] != cfg.n_mels:
        raise ValueError(f"mel map has {x.shape[1]} bands, encoder expects {cfg.n_mels}")
    x = pad_frames(x)[None]  # (1, T, F) single-channel image
    for i in range(N_CONV_LAYERS):
        x = conv2d_stride2(x, w[f"conv{i}.w"], w[f"conv{i}.b"])
        x = relu(batch_norm(x, w, f"bn{i}"))
    c, t, f = x.shape
    seq = x.transpose(1, 0, 2).reshape(t, c * f)  # per time step: channels x freq
    h = gru_forward(seq, w, "gru")
    return np.tanh(w["fc.w"] @ h + w["fc.b"])
