import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prosospeaker import archive
from prosospeaker.dsp import MelSpectrogram, MfccMap
from prosospeaker.embeddings import (EmbeddingVector, ProsodyEncoderConfig, SpeakerEncoderConfig,
                                     WeightArchive, WeightError, attentive_stats_pool, gru_forward,
                                     init_weights, load_weights, prosody_embed, save_weights,
                                     speaker_embed)
from prosospeaker.embeddings.speaker import param_shapes as speaker_shapes


@pytest.fixture(scope="module")
def spk():
    return init_weights("ecapa-tdnn", SpeakerEncoderConfig.desk(), seed=1)


@pytest.fixture(scope="module")
def pro():
    return init_weights("prosody-encoder", ProsodyEncoderConfig.desk(), seed=2)


def rand_map(seed, m, k=80):
    return np.random.default_rng(seed).standard_normal((m, k))


# -- weight archives ---------------------------------------------------------------

def test_wrong_shape_names_tensor(spk):
    t = dict(spk.tensors)
    t["stem.conv.w"] = np.zeros((3, 3, 3))
    with pytest.raises(WeightError, match=r"stem\.conv\.w.*\(3, 3, 3\).*expected"):
        WeightArchive(spk.architecture, spk.config, t)


def test_nan_and_missing_rejected(spk):
    t = dict(spk.tensors)
    bad = t["fc.b"].copy()
    bad[0] = np.nan
    with pytest.raises(WeightError, match="NaN"):
        WeightArchive(spk.architecture, spk.config, {**t, "fc.b": bad})
    del t["fc.b"]
    with pytest.raises(WeightError, match="missing"):
        WeightArchive(spk.architecture, spk.config, t)


def test_unknown_version_rejected(tmp_path, spk):
    p = tmp_path / "w.arch"
    archive.save(p, spk.tensors, {**spk.metadata, "format_version": 99})
    with pytest.raises(WeightError, match="version"):
        load_weights(p)


def test_round_trip_bitwise(tmp_path, spk, pro):
    for w in (spk, pro):
        p = tmp_path / f"{w.architecture}.arch"
        save_weights(p, w)
        back = load_weights(p)
        assert back.config == w.config
        assert all(np.array_equal(back[k], w[k]) for k in w.tensors)
        save_weights(tmp_path / "again.arch", back)
        assert archive.digest(tmp_path / "again.arch") == archive.digest(p)


def test_seeded_init_hashes_identically(tmp_path):
    for i in range(2):
        save_weights(tmp_path / f"{i}.arch", init_weights("ecapa-tdnn", SpeakerEncoderConfig.desk(), 7))
    assert archive.digest(tmp_path / "0.arch") == archive.digest(tmp_path / "1.arch")
    save_weights(tmp_path / "2.arch", init_weights("ecapa-tdnn", SpeakerEncoderConfig.desk(), 8))
    assert archive.digest(tmp_path / "2.arch") != archive.digest(tmp_path / "0.arch")


def test_paper_config_shapes():
    cfg = SpeakerEncoderConfig()
    assert (cfg.channels, cfg.dilations, cfg.res2_scale, cfg.embed_dim) == (512, (2, 3, 4), 8, 192)
    assert speaker_shapes(cfg)["fc.w"][0] == 192
    p = ProsodyEncoderConfig()
    assert p.conv_channels == (32, 32, 64, 64, 128, 128) and p.embed_dim == 128
    with pytest.raises(ValueError):
        ProsodyEncoderConfig(conv_channels=(8, 8, 8))


# -- speaker encoder ----------------------------------------------------------------

def test_speaker_fixed_length(spk):
    for m in (1, 50, 500):
        assert len(speaker_embed(MfccMap(rand_map(m, m)), spk)) == 192


def test_speaker_constant_input_duplicated_frames(spk):
    row = np.random.default_rng(0).standard_normal(80)
    a = speaker_embed(MfccMap(np.tile(row, (20, 1))), spk).values
    b = speaker_embed(MfccMap(np.tile(row, (40, 1))), spk).values
    assert np.max(np.abs(a - b)) <= 1e-6


def test_speaker_deterministic(spk):
    x = MfccMap(rand_map(3, 120))
    assert np.array_equal(speaker_embed(x, spk).values, speaker_embed(x, spk).values)


def test_speaker_dim_mismatch(spk, pro):
    with pytest.raises(ValueError, match="coefficients"):
        speaker_embed(MfccMap(rand_map(0, 10, 40)), spk)
    with pytest.raises(WeightError):
        speaker_embed(MfccMap(rand_map(0, 10)), pro)


# -- attentive pooling --------------------------------------------------------------

def test_pool_single_frame(spk):
    h = np.random.default_rng(1).standard_normal((spk.config.agg_channels, 1))
    pooled, alpha = attentive_stats_pool(h, spk.tensors, return_weights=True)
    assert np.all(alpha == 1.0)
    np.testing.assert_array_equal(pooled, np.r_[h[:, 0], np.zeros(h.shape[0])])


def test_pool_uniform_attention_gives_row_means(spk):
    w = dict(spk.tensors)
    w["asp.conv.w"] = np.zeros_like(w["asp.conv.w"])
    w["asp.conv.b"] = np.zeros_like(w["asp.conv.b"])
    h = np.random.default_rng(2).standard_normal((spk.config.agg_channels, 37))
    pooled = attentive_stats_pool(h, w)
    c = h.shape[0]
    np.testing.assert_allclose(pooled[:c], h.mean(axis=1), atol=1e-12)
    np.testing.assert_allclose(pooled[c:], h.std(axis=1), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(1, 60))
def test_pool_weights_are_distributions(spk, seed, m):
    h = 3 * np.random.default_rng(seed).standard_normal((spk.config.agg_channels, m))
    pooled, alpha = attentive_stats_pool(h, spk.tensors, return_weights=True)
    assert np.all(alpha >= 0)
    np.testing.assert_allclose(alpha.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(pooled[h.shape[0]:] >= 0)


# -- prosody encoder ----------------------------------------------------------------

def test_prosody_fixed_length_and_range(pro):
    for m in (63, 64, 640):
        e = prosody_embed(MelSpectrogram(rand_map(m, m)), pro)
        assert len(e) == 128 and e.kind == "prosody"
        assert np.all(np.abs(e.values) < 1)


def test_prosody_short_input_is_zero_padded(pro):
    x = rand_map(9, 63)
    padded = np.vstack([x, np.zeros((1, 80))])
    assert np.array_equal(prosody_embed(MelSpectrogram(x), pro).values,
                          prosody_embed(MelSpectrogram(padded), pro).values)


# -- GRU ---------------------------------------------------------------------------

def gru_weights(h, d, rng=None, zero=False):
    shapes = {"g.w_ih": (3 * h, d), "g.w_hh": (3 * h, h), "g.b_ih": (3 * h,), "g.b_hh": (3 * h,)}
    if zero:
        return {k: np.zeros(s) for k, s in shapes.items()}
    return {k: rng.standard_normal(s) for k, s in shapes.items()}


def test_gru_zero_weights():
    out = gru_forward(np.ones((5, 3)), gru_weights(4, 3, zero=True), "g")
    assert np.array_equal(out, np.zeros(4))


def test_gru_single_step_by_hand():
    w = gru_weights(2, 2, np.random.default_rng(4))
    x = [0.3, -0.7]
    sig = lambda v: 1 / (1 + math.exp(-v))  # noqa: E731
    ref = []
    for j in range(2):
        def gate(g):
            row = g * 2 + j
            xi = sum(w["g.w_ih"][row][k] * x[k] for k in range(2)) + w["g.b_ih"][row]
            return xi, w["g.b_hh"][row]  # h0 = 0 so the recurrent term is the bias
        xr, hr = gate(0)
        xz, hz = gate(1)
        xn, hn = gate(2)
        r, z = sig(xr + hr), sig(xz + hz)
        n = math.tanh(xn + r * hn)
        ref.append((1 - z) * n)
    np.testing.assert_allclose(gru_forward(np.array([x]), w, "g"), ref, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.integers(1, 30), scale=st.floats(0.1, 20))
def test_gru_state_bounded(seed, t, scale):
    rng = np.random.default_rng(seed)
    w = {k: scale * v for k, v in gru_weights(5, 3, rng).items()}
    out = gru_forward(scale * rng.standard_normal((t, 3)), w, "g")
    # open interval in exact arithmetic; float tanh can round to exactly +-1
    assert np.all(np.abs(out) <= 1)
    assert np.all(np.isfinite(out))


# -- global properties ---------------------------------------------------------------

def test_numerical_health_long_input(spk, pro):
    rng = np.random.default_rng(11)
    s = speaker_embed(MfccMap(10 * rng.standard_normal((6000, 80))), spk)  # 60 s at 10 ms hop
    p = prosody_embed(MelSpectrogram(10 * rng.standard_normal((4800, 80))), pro)  # 60 s at 12.5 ms
    assert np.all(np.isfinite(s.values)) and np.all(np.isfinite(p.values))


def test_sensitivity_no_collisions(spk, pro):
    rng = np.random.default_rng(12)
    base = rng.standard_normal((64, 80))
    for _ in range(100):
        other = base.copy()
        other[rng.integers(64)] += rng.standard_normal(80)
        assert not np.array_equal(speaker_embed(MfccMap(base), spk).values,
                                  speaker_embed(MfccMap(other), spk).values)
        assert not np.array_equal(prosody_embed(MelSpectrogram(base), pro).values,
                                  prosody_embed(MelSpectrogram(other), pro).values)


def test_embedding_vector_checks():
    with pytest.raises(ValueError):
        EmbeddingVector(np.array([np.inf]), "speaker")
    with pytest.raises(ValueError):
        EmbeddingVector(np.zeros(3), "pitch")
