"""
Desk-scale detection experiment
===============================

The synthetic three-class corpus, fixed random encoders, the 30-point SVM grid,
the three-model ablation and the compression sweep. Figures are written as SVG
into the directory given on the command line (default ``notebook_out``).
"""

# %%
import os
import shutil
import sys
import tempfile

import numpy as np

from prosospeaker import metrics, plots
from prosospeaker.classifier import grid_search
from prosospeaker.dataset import filter_by_kind, make_synthetic_corpus
from prosospeaker.embeddings import ProsodyEncoderConfig, SpeakerEncoderConfig, init_weights
from prosospeaker.features import SLICES
from prosospeaker.pipeline import extract_many

out_dir = sys.argv[1] if len(sys.argv) > 1 else "notebook_out"
os.makedirs(out_dir, exist_ok=True)
work = tempfile.mkdtemp(prefix="prosospeaker_")

corpus = make_synthetic_corpus(7, 40, os.path.join(work, "corpus"))
sw = init_weights("ecapa-tdnn", SpeakerEncoderConfig.desk(), seed=45)
pw = init_weights("prosody-encoder", ProsodyEncoderConfig.desk(), seed=46)
print(corpus.counts())

# %%
def features(part, profile="none"):
    c = corpus.partition(part)
    return c, extract_many([corpus.resolve(r) for r in c], sw, pw, profile)


train, F_train = features("train")
dev, F_dev = features("dev")
test, F_test = features("test")

# %%
# Three models: prosody columns, speaker columns, everything.
# Each is selected on dev balanced accuracy over the full grid.
models = {}
for name in ("prosody", "speaker", "combined"):
    s = SLICES[name]
    res = grid_search(F_train[:, s], train.labels, F_dev[:, s], dev.labels, feature_slice=name)
    models[name] = res.model
    print(name, "best:", res.best)

# %%
curves, bars = {}, ([], [])
for name, model in models.items():
    for scenario in ("TTS", "VC", "ALL"):
        sub = filter_by_kind(test, scenario)
        keep = np.isin([r.path for r in test], [r.path for r in sub])
        scores = model.score(F_test[keep][:, SLICES[name]])
        roc = metrics.roc_curve(scores, sub.labels)
        bars[0].append(f"{name[:4]}/{scenario}")
        bars[1].append(metrics.auc(roc))
        if scenario == "ALL":
            curves[f"{name} AUC {metrics.auc(roc):.3f}"] = (roc.fpr, roc.tpr)
        print(f"{name:8s} {scenario:3s} AUC {metrics.auc(roc):.3f} EER {metrics.eer(roc):.3f}")

with open(os.path.join(out_dir, "roc_models.svg"), "w") as fh:
    fh.write(plots.roc_svg(curves, "ROC on the synthetic test split"))
with open(os.path.join(out_dir, "ablation_auc.svg"), "w") as fh:
    fh.write(plots.bar_svg(*bars, "AUC per model and scenario", "AUC"))

# %%
# Compression sweep: the clean-trained combined model scores degraded test audio.
for profile in ("none", "br128", "br64", "br32"):
    _, F = features("test", profile)
    roc = metrics.roc_curve(models["combined"].score(F), test.labels)
    print(f"{profile:6s} AUC {metrics.auc(roc):.3f}")

# %%
cm = metrics.pearson_matrix(np.vstack([F_train, F_dev, F_test]), split=192)
with open(os.path.join(out_dir, "correlation.svg"), "w") as fh:
    fh.write(plots.heatmap_svg(cm.display(), "feature cross-correlation", split=192))
print({k: round(v["mean"], 3) for k, v in metrics.block_stats(cm).items()})

shutil.rmtree(work)
