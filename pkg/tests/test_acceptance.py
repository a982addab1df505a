"""The eight acceptance criteria, each at its stated tolerance."""

import filecmp
import os
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from e2e import run_experiment
from oracles import (dual_qp_projected_gradient, mann_whitney_auc, naive_dct_ii,
                     random_svm_problem, sweep_eer)
from prosospeaker import metrics
from prosospeaker.audio import AudioBuffer
from prosospeaker.classifier import smo_solve
from prosospeaker.dsp import (LOG_FLOOR, dct_ii, mel_centers, mel_filterbank, mel_spectrogram,
                              mfcc, stft)
from prosospeaker.embeddings import (ProsodyEncoderConfig, SpeakerEncoderConfig, init_weights,
                                     prosody_embed, speaker_embed)
from prosospeaker.embeddings.speaker import speaker_forward
from prosospeaker.features import concat, fit_standardizer

FS = 16000


def test_criterion_1_smo_matches_qp_oracle(criterion):
    # the objective must agree to 1e-6, so SMO runs with a KKT tolerance of 1e-6 here
    worst_obj, worst_eq, t_smo = 0.0, 0.0, 0.0
    for seed in range(100):
        X, y, C, k = random_svm_problem(seed)
        t0 = time.perf_counter()
        res = smo_solve(X, y, C, k, tol=1e-6)
        t_smo += time.perf_counter() - t0
        _, obj = dual_qp_projected_gradient(k.matrix(X, X), y, C)
        worst_obj = max(worst_obj, abs(res.objective - obj) / abs(obj))
        worst_eq = max(worst_eq, abs(res.alpha @ y))
    ok = worst_obj <= 1e-6 and worst_eq <= 1e-6 and t_smo < 30
    criterion(1, ok, f"max rel objective gap {worst_obj:.2e}, max |sum a*y| {worst_eq:.1e}, "
                     f"SMO time {t_smo:.2f} s")


def test_criterion_2_metric_oracles(criterion):
    t0 = time.perf_counter()
    worst_auc, worst_eer = 0.0, 0.0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 201))
        pos = rng.random(n) < 0.5
        pos[0], pos[1] = True, False
        s = rng.standard_normal(n) + pos
        if seed % 2:
            s = np.round(s, 1)  # ties
        r = metrics.roc_curve(s, np.where(pos, "DF", "REAL"))
        worst_auc = max(worst_auc, abs(metrics.auc(r) - mann_whitney_auc(s, pos)))
        worst_eer = max(worst_eer, abs(metrics.eer(r) - sweep_eer(s, pos)))
    elapsed = time.perf_counter() - t0
    ok = worst_auc <= 1e-12 and worst_eer <= 1e-9 and elapsed < 10
    criterion(2, ok, f"max AUC gap {worst_auc:.1e}, max EER gap {worst_eer:.1e}, {elapsed:.2f} s")


def test_criterion_3_dsp_oracles(criterion):
    rng = np.random.default_rng(3)
    a = AudioBuffer(0.3 * rng.standard_normal(FS // 2), FS)
    # hand composition: periodic Hann frames -> power -> mel -> log -> naive DCT
    x, win, hop = a.samples, 400, 160
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(win) / win)
    frames = np.stack([x[i:i + win] * w for i in range(0, len(x) - win + 1, hop)])
    logmel = np.log(np.maximum(np.abs(np.fft.rfft(frames, 512)) ** 2 @ mel_filterbank(80, 512, FS).T,
                               LOG_FLOOR))
    ref = np.array([naive_dct_ii(row, 80) for row in logmel])
    mfcc_gap = float(np.max(np.abs(mfcc(a).values - ref)))

    tone = AudioBuffer(np.sin(2 * np.pi * 1000 * np.arange(FS) / FS), FS)
    stft_ok = bool(np.all(np.argmax(stft(tone, 25, 10, 512).magnitudes, axis=1) == 32))
    nearest = int(np.argmin(np.abs(mel_centers(80, 0, FS / 2) - 1000)))
    mel_ok = bool(np.all(np.argmax(mel_spectrogram(tone).values, axis=1) == nearest))

    dct_gap = 0.0
    for K in range(1, 65):
        v = rng.standard_normal(K)
        dct_gap = max(dct_gap, float(np.max(np.abs(dct_ii(v) - naive_dct_ii(v, K)))))
    ok = mfcc_gap <= 1e-9 and stft_ok and mel_ok and dct_gap <= 1e-12
    criterion(3, ok, f"mfcc gap {mfcc_gap:.1e}, stft peak {stft_ok}, mel peak {mel_ok}, "
                     f"dct gap {dct_gap:.1e}")


def test_criterion_4_embedding_invariants(criterion):
    rng = np.random.default_rng(4)
    maps = []
    for dur in (0.8, 2.0, 10.0, 60.0):
        a = AudioBuffer(0.3 * rng.standard_normal(int(dur * FS)), FS)
        maps.append((dur, mfcc(a), mel_spectrogram(a)))
    failures = []
    for seed in range(10):
        sw = init_weights("ecapa-tdnn", SpeakerEncoderConfig(), seed)
        pw = init_weights("prosody-encoder", ProsodyEncoderConfig(), 100 + seed)
        for dur, c, m in maps:
            f_s, alpha = speaker_forward(c.values, sw.tensors, sw.config)
            f_s = speaker_embed(c, sw)  # also exercises the vector checks
            f_p = prosody_embed(m, pw)
            f = concat(f_s, f_p)
            ok = (len(f_s), len(f_p), len(f)) == (192, 128, 320)
            ok &= bool(np.all(np.isfinite(f.values)))
            ok &= bool(np.max(np.abs(alpha.sum(axis=1) - 1.0)) <= 1e-6)
            if not ok:
                failures.append((seed, dur))
    criterion(4, not failures, f"10 archives x 4 durations (paper-size encoders), failures {failures}")


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 40), st.integers(1, 12)),
              elements=st.floats(-1e6, 1e6)))
def test_criterion_7_standardization_property(X):
    Z = fit_standardizer(X).transform(X)
    assert np.all(np.abs(Z.mean(axis=0)) <= 1e-9)
    live = np.ptp(X, axis=0) > 1e-6 * np.maximum(1.0, np.abs(X).max(axis=0))
    assert np.all(np.abs(Z.var(axis=0)[live] - 1.0) <= 1e-9)


def test_criterion_7_standardization(criterion):
    rng = np.random.default_rng(7)
    worst_mean, worst_var = 0.0, 0.0
    for seed in range(200):
        n, d = int(rng.integers(2, 60)), int(rng.integers(1, 40))
        X = rng.standard_normal((n, d)) * rng.uniform(1e-3, 1e3, d) + rng.uniform(-1e3, 1e3, d)
        X[:, rng.random(d) < 0.1] = 5.0  # some degenerate columns
        Z = fit_standardizer(X).transform(X)
        live = np.ptp(X, axis=0) > 0
        worst_mean = max(worst_mean, float(np.abs(Z.mean(axis=0)).max()))
        if live.any():
            worst_var = max(worst_var, float(np.abs(Z.var(axis=0)[live] - 1).max()))
    ok = worst_mean <= 1e-9 and worst_var <= 1e-9
    criterion(7, ok, f"max |column mean| {worst_mean:.1e}, max |var - 1| {worst_var:.1e} "
                     f"(plus 200-example property test)")


# -- synthetic end-to-end experiment -----------------------------------------------------

@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    t0 = time.perf_counter()
    first = run_experiment(tmp_path_factory.mktemp("run1"))
    first["seconds"] = time.perf_counter() - t0
    return first


def test_criterion_5_end_to_end(criterion, experiment):
    m, abl = experiment["metrics"], experiment["ablation"]
    combined = m["metrics_combined_ALL_none.json"]["auc"]
    p_tts, p_vc = abl["prosody"]["TTS"]["auc"], abl["prosody"]["VC"]["auc"]
    s_tts, s_vc = abl["speaker"]["TTS"]["auc"], abl["speaker"]["VC"]["auc"]
    ok = combined >= 0.95 and p_tts > p_vc and s_vc > s_tts and experiment["seconds"] < 300
    criterion(5, ok, f"combined AUC {combined:.3f}; prosody TTS {p_tts:.3f} vs VC {p_vc:.3f}; "
                     f"speaker VC {s_vc:.3f} vs TTS {s_tts:.3f}; {experiment['seconds']:.0f} s")


def test_criterion_6_compression_monotonicity(criterion, experiment):
    m = experiment["metrics"]
    aucs = [m[f"metrics_combined_ALL_{p}.json"]["auc"] for p in ("none", "br128", "br64", "br32")]
    steps_ok = all(b <= a + 0.02 for a, b in zip(aucs, aucs[1:]))
    ok = steps_ok and aucs[-1] >= 0.85
    criterion(6, ok, "AUC none/br128/br64/br32 = " + " / ".join(f"{a:.3f}" for a in aucs))


def test_criterion_8_determinism(criterion, experiment, tmp_path_factory):
    second = run_experiment(tmp_path_factory.mktemp("run2"))
    a, b = experiment["runs"], second["runs"]

    def outputs(d):
        return sorted(n for n in os.listdir(d)
                      if n.endswith(".json") and (n.startswith("metrics_") or n == "ablation.json"))

    names = outputs(a)
    same = names == outputs(b)
    mismatched = [n for n in names if not filecmp.cmp(os.path.join(a, n), os.path.join(b, n), shallow=False)]
    criterion(8, same and not mismatched,
              f"{len(names)} JSON outputs compared byte-for-byte, mismatches {mismatched}")
