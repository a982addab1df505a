"""Drive the desk-scale synthetic experiment through the command-line entry point."""

import json
import os

from prosospeaker.cli import main

CORPUS_SEED, N_PER_CLASS = 7, 40
SPEAKER_SEED, PROSODY_SEED = 45, 46
PROFILES = ("none", "br128", "br64", "br32")


def cli(*argv):
    code = main([str(a) for a in argv])
    if code != 0:
        raise RuntimeError(f"prosospeaker {' '.join(map(str, argv))} exited with {code}")


def run_experiment(root) -> dict:
    """Full pipeline into ``root``; returns the parsed metrics and ablation outputs."""
    root = os.fspath(root)
    corpus, feats, runs = (os.path.join(root, d) for d in ("corpus", "features", "runs"))
    manifest = os.path.join(corpus, "manifest.csv")
    spk, pro, model = (os.path.join(root, f) for f in ("speaker.psk", "prosody.psk", "model.psk"))

    cli("synth-corpus", "--seed", CORPUS_SEED, "--n", N_PER_CLASS, "--out", corpus)
    cli("init", "--arch", "speaker", "--preset", "desk", "--seed", SPEAKER_SEED, "--out", spk)
    cli("init", "--arch", "prosody", "--preset", "desk", "--seed", PROSODY_SEED, "--out", pro)
    weights = ("--speaker-weights", spk, "--prosody-weights", pro)
    cli("extract", "--manifest", manifest, *weights, "--out", feats)
    cli("train", "--manifest", manifest, "--features", feats, "--grid", "default", "--out", model)
    cli("eval", "--manifest", manifest, "--model", model, "--features", feats,
        "--kinds", "each", "--out", runs)
    # the clean-trained model scores degraded test audio
    for p in PROFILES[1:]:
        cli("eval", "--manifest", manifest, "--model", model, "--features", feats, *weights,
            "--profile", p, "--kinds", "ALL", "--out", runs)
    cli("ablate", "--manifest", manifest, "--features", feats, "--out", runs)

    out = {"runs": runs, "metrics": {}}
    for name in sorted(os.listdir(runs)):
        if name.startswith("metrics_"):
            with open(os.path.join(runs, name), encoding="utf-8") as fh:
                out["metrics"][name] = json.load(fh)
    with open(os.path.join(runs, "ablation.json"), encoding="utf-8") as fh:
        out["ablation"] = json.load(fh)["models"]
    return out
