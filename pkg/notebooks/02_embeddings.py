"""
Embeddings and their cross-correlation
======================================

Random-weight speaker and prosody encoders applied to the three synthetic
classes, followed by the block statistics of the feature correlation matrix.
"""

# %%
import numpy as np

from prosospeaker.audio import AudioBuffer
from prosospeaker.dataset import synth_utterance
from prosospeaker.embeddings import (ProsodyEncoderConfig, SpeakerEncoderConfig, init_weights,
                                     prosody_embed, speaker_embed)
from prosospeaker.dsp import mel_spectrogram, mfcc
from prosospeaker.features import concat
from prosospeaker.metrics import block_stats, pearson_matrix

# desk presets keep the topology and output sizes but narrow the channels
sw = init_weights("ecapa-tdnn", SpeakerEncoderConfig.desk(), seed=45)
pw = init_weights("prosody-encoder", ProsodyEncoderConfig.desk(), seed=46)

# %%
rng = np.random.default_rng(1)
rows, kinds = [], []
for kind in ("real", "tts", "vc"):
    for _ in range(12):
        a = AudioBuffer(synth_utterance(rng, kind), 16000)
        f = concat(speaker_embed(mfcc(a), sw), prosody_embed(mel_spectrogram(a), pw))
        rows.append(f.values)
        kinds.append(kind)
F = np.vstack(rows)
kinds = np.array(kinds)
print("feature matrix", F.shape)

# %%
# Distance of each fake class to the real centroid, per embedding block.
# With random weights both blocks move by similar amounts on average, so the
# class structure only shows up once a classifier weighs the dimensions
# (see the ablation in the next script).
real = F[kinds == "real"]
for name, cols in (("speaker", slice(0, 192)), ("prosody", slice(192, 320))):
    spread = real[:, cols].std(axis=0) + 1e-12
    centre = real[:, cols].mean(axis=0)
    for kind in ("tts", "vc"):
        z = (F[kinds == kind][:, cols] - centre) / spread
        print(f"{name:8s} {kind}: mean |z| = {np.abs(z).mean():.2f}")

# %%
# Cross-correlation of the 320 dimensions with absolute block means.
cm = pearson_matrix(F, split=192)
for block, s in block_stats(cm).items():
    print(f"{block}: mean |r| {s['mean']:.3f}, std {s['std']:.3f}")
