"""ECAPA-TDNN style speaker encoder (inference only)."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .layers import batch_norm, conv1d, relu, sigmoid, softmax

ARCHITECTURE = "ecapa-tdnn"


@dataclass(frozen=True)
class SpeakerEncoderConfig:
    input_dim: int = 80
    channels: int = 512
    n_blocks: int = 3
    dilations: tuple = (2, 3, 4)
    kernel_size: int = 3
    stem_kernel: int = 5
    res2_scale: int = 8
    se_channels: int = 128
    agg_channels: int = 1536
    attention_channels: int = 128
    embed_dim: int = 192

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        dims = [self.input_dim, self.channels, self.n_blocks, self.res2_scale,
                self.se_channels, self.agg_channels, self.attention_channels, self.embed_dim]
        if min(dims) < 1:
            raise ValueError("all speaker encoder dimensions must be >= 1")
        if len(self.dilations) != self.n_blocks:
            raise ValueError(f"need {self.n_blocks} dilations, got {len(self.dilations)}")
        if self.channels % self.res2_scale:
            raise ValueError("channels must be divisible by res2_scale")
        if self.kernel_size % 2 == 0 or self.stem_kernel % 2 == 0:
            raise ValueError("kernel sizes must be odd")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpeakerEncoderConfig":
        return cls(**{**d, "dilations": tuple(d["dilations"])})

    @classmethod
    def desk(cls) -> "SpeakerEncoderConfig":
        """Narrow variant for fast tests; same topology and output size."""
        return cls(channels=64, se_channels=16, agg_channels=192, attention_channels=32)


def _conv(shapes, name, c_out, c_in, k):
    shapes[f"{name}.w"] = (c_out, c_in, k)
    shapes[f"{name}.b"] = (c_out,)


def _bn(shapes, name, c):
    for p in ("gamma", "beta", "mean", "var"):
        shapes[f"{name}.{p}"] = (c,)


def param_shapes(cfg: SpeakerEncoderConfig) -> dict:
    """Ordered name -> shape map of every tensor the encoder needs."""
    s = {}
    c, width = cfg.channels, cfg.channels // cfg.res2_scale
    _conv(s, "stem.conv", c, cfg.input_dim, cfg.stem_kernel)
    _bn(s, "stem.bn", c)
    for i in range(cfg.n_blocks):
        p = f"block{i}"
        _conv(s, f"{p}.tdnn1.conv", c, c, 1)
        _bn(s, f"{p}.tdnn1.bn", c)
        for j in range(cfg.res2_scale - 1):
            _conv(s, f"{p}.res2.{j}.conv", width, width, cfg.kernel_size)
            _bn(s, f"{p}.res2.{j}.bn", width)
        _conv(s, f"{p}.tdnn2.conv", c, c, 1)
        _bn(s, f"{p}.tdnn2.bn", c)
        _conv(s, f"{p}.se.conv1", cfg.se_channels, c, 1)
        _conv(s, f"{p}.se.conv2", c, cfg.se_channels, 1)
    _conv(s, "mfa.conv", cfg.agg_channels, cfg.n_blocks * c, 1)
    _bn(s, "mfa.bn", cfg.agg_channels)
    _conv(s, "asp.tdnn.conv", cfg.attention_channels, 3 * cfg.agg_channels, 1)
    _bn(s, "asp.tdnn.bn", cfg.attention_channels)
    _conv(s, "asp.conv", cfg.agg_channels, cfg.attention_channels, 1)
    _bn(s, "asp_bn", 2 * cfg.agg_channels)
    _conv(s, "fc", cfg.embed_dim, 2 * cfg.agg_channels, 1)
    return s


def _tdnn(x, w, name, dilation=1):
    y = conv1d(x, w[f"{name}.conv.w"], w[f"{name}.conv.b"], dilation)
    return batch_norm(relu(y), w, f"{name}.bn")


def _se_res2_block(x, w, p, cfg: SpeakerEncoderConfig, dilation):
    residual = x
    x = _tdnn(x, w, f"{p}.tdnn1")

    chunks = np.split(x, cfg.res2_scale, axis=0)
    outs = [chunks[0]]
    y = None
    for j, chunk in enumerate(chunks[1:]):
        inp = chunk if j == 0 else chunk + y
        y = _tdnn(inp, w, f"{p}.res2.{j}", dilation)
        outs.append(y)
    x = np.concatenate(outs, axis=0)

    x = _tdnn(x, w, f"{p}.tdnn2")

    s = x.mean(axis=1, keepdims=True)
    s = relu(conv1d(s, w[f"{p}.se.conv1.w"], w[f"{p}.se.conv1.b"]))
    s = sigmoid(conv1d(s, w[f"{p}.se.conv2.w"], w[f"{p}.se.conv2.b"]))
    return x * s + residual


def _weighted_stats(h, alpha):
    mean = (alpha * h).sum(axis=1)
    var = (alpha * (h - mean[:, None]) ** 2).sum(axis=1)
    return mean, np.sqrt(np.maximum(var, 0.0))


def attentive_stats_pool(h, w: dict, prefix: str = "asp", return_weights: bool = False):
    """Channel-dependent attentive statistics pooling.

    The attention network sees every frame concatenated with the utterance's
    global mean and standard deviation, and emits one softmax over time per
    channel.

    Args:
        h: (C, M) frame-level features.
        w: weights holding ``{prefix}.tdnn.*`` and ``{prefix}.conv.*``.
        return_weights: also return the (C, M) attention matrix.

    Returns:
        length-2C vector ``[weighted means; weighted stds]``.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] < 1:
        raise ValueError(f"expected a (C, M>=1) matrix, got shape {h.shape}")
    c, m = h.shape
    uniform = np.full((c, m), 1.0 / m)
    g_mean, g_std = _weighted_stats(h, uniform)
    ctx = np.concatenate([h, np.repeat(g_mean[:, None], m, axis=1),
                          np.repeat(g_std[:, None], m, axis=1)], axis=0)

    a = _tdnn(ctx, w, f"{prefix}.tdnn")
    logits = conv1d(np.tanh(a), w[f"{prefix}.conv.w"], w[f"{prefix}.conv.b"])
    if logits.shape[0] != c:
        raise ValueError(f"attention produces {logits.shape[0]} channels, features have {c}")
    alpha = softmax(logits, axis=1)

    mean, std = _weighted_stats(h, alpha)
    pooled = np.concatenate([mean, std])
    return (pooled, alpha) if return_weights else pooled


def frame_features(mfcc_values, w: dict, cfg: SpeakerEncoderConfig) -> np.ndarray:
    """Run the network up to (and including) the aggregation layer: (agg_channels, M)."""
    x = np.asarray(mfcc_values, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected an (M>=1, B) feature map, got shape {x.shape}")
    if x.shape[1] != cfg.input_dim:
        raise ValueError(f"feature map has {x.shape[1]} coefficients, encoder expects {cfg.input_dim}")
    x = x.T
    x = _tdnn(x, w, "stem")
    block_outs = []
    for i, d in enumerate(cfg.dilations):
        x = _se_res2_block(x, w, f"block{i}", cfg, d)
        block_outs.append(x)
    return _tdnn(np.concatenate(block_outs, axis=0), w, "mfa")


def speaker_forward(mfcc_values, w: dict, cfg: SpeakerEncoderConfig):
    """Forward pass returning ``(embedding, attention_weights)``."""
    h = frame_features(mfcc_values, w, cfg)
    pooled, alpha = attentive_stats_pool(h, w, "asp", return_weights=True)
    pooled = batch_norm(pooled, w, "asp_bn")
    emb = w["fc.w"][:, :, 0] @ pooled + w["fc.b"]
    return emb, alpha
