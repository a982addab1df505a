"""Inference-only numpy layers shared by the two encoders."""

from __future__ import annotations

import numpy as np

BN_EPS = 1e-5


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    return np.maximum(x, 0.0)


def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def batch_norm(x, w: dict, prefix: str):
    """Batch norm with stored statistics; channels on axis 0."""
    shape = (-1,) + (1,) * (x.ndim - 1)
    scale = w[f"{prefix}.gamma"] / np.sqrt(w[f"{prefix}.var"] + BN_EPS)
    shift = w[f"{prefix}.beta"] - w[f"{prefix}.mean"] * scale
    return x * scale.reshape(shape) + shift.reshape(shape)


def conv1d(x, weight, bias=None, dilation: int = 1):
    """'Same'-length 1-D convolution over time with reflect padding.

    x: (C_in, M), weight: (C_out, C_in, k) with odd k.
    """
    c_out, c_in, k = weight.shape
    if x.shape[0] != c_in:
        raise ValueError(f"conv1d expects {c_in} input channels, got {x.shape[0]}")
    m = x.shape[1]
    if k == 1:
        y = weight[:, :, 0] @ x
    else:
        pad = dilation * (k - 1) // 2
        xp = np.pad(x, ((0, 0), (pad, pad)), mode="reflect")
        y = np.zeros((c_out, m))
        for j in range(k):
            s = j * dilation
            y += weight[:, :, j] @ xp[:, s: s + m]
    if bias is not None:
        y += bias[:, None]
    return y


def conv2d_stride2(x, weight, bias=None):
    """3x3 convolution, stride 2, zero padding 1.

    x: (C_in, T, F) -> (C_out, ceil(T/2), ceil(F/2)).
    """
    c_out, c_in, kh, kw = weight.shape
    if x.shape[0] != c_in:
        raise ValueError(f"conv2d expects {c_in} input channels, got {x.shape[0]}")
    _, t, f = x.shape
    t_out, f_out = (t + 1) // 2, (f + 1) // 2
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    cols = np.empty((c_in, kh, kw, t_out, f_out))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i: i + 2 * t_out: 2, j: j + 2 * f_out: 2]
    y = weight.reshape(c_out, -1) @ cols.reshape(c_in * kh * kw, -1)
    if bias is not None:
        y += bias[:, None]
    return y.reshape(c_out, t_out, f_out)


def gru_forward(seq, weights: dict, prefix: str = "gru") -> np.ndarray:
    """Single-layer GRU over a (T, D) sequence from a zero state; returns h_T.

    Gate layout follows the common (reset, update, new) stacking:
    ``w_ih`` is (3H, D), ``w_hh`` is (3H, H), biases are (3H,).
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise ValueError(f"gru_forward expects a (T>=1, D) sequence, got shape {seq.shape}")
    w_ih = weights[f"{prefix}.w_ih"]
    w_hh = weights[f"{prefix}.w_hh"]
    b_ih = weights[f"{prefix}.b_ih"]
    b_hh = weights[f"{prefix}.b_hh"]
    hidden = w_hh.shape[1]
    if w_ih.shape != (3 * hidden, seq.shape[1]) or w_hh.shape != (3 * hidden, hidden):
        raise ValueError(
            f"GRU weight shapes {w_ih.shape}/{w_hh.shape} do not fit input dim "
            f"{seq.shape[1]} and hidden size {hidden}"
        )

    gx = seq @ w_ih.T + b_ih  # input projections for all steps at once
    h = np.zeros(hidden)
    for t in range(seq.shape[0]):
        gh = w_hh @ h + b_hh
        r = sigmoid(gx[t, :hidden] + gh[:hidden])
        z = sigmoid(gx[t, hidden: 2 * hidden] + gh[hidden: 2 * hidden])
        n = np.tanh(gx[t, 2 * hidden:] + r * gh[2 * hidden:])
        h = (1.0 - z) * n + z * h
    return h
