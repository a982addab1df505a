"""Command-line driver: corpus synthesis, weight init, extraction, training and reports.

Every command is a thin wrapper over the library. Exit status is 0 on success,
1 when some input items failed and 2 for usage or precondition errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import archive, metrics, plots
from .audio import AudioError, PROFILES, degrade, load_wav, write_wav
from .classifier import (SvmError, grid_search, labels_from_scores, load_model, parse_grid,
                         save_model)
from .dataset import ManifestError, filter_by_kind, make_synthetic_corpus, parse_manifest
from .embeddings import (ProsodyEncoderConfig, SpeakerEncoderConfig, WeightError, init_weights,
                         load_weights, save_weights)
from .features import FEATURE_DIM, SLICES, SPEAKER_DIM, FeatureError
from .pipeline import extract_file, worker_count

log = logging.getLogger("prosospeaker")

FORMAT_VERSION = 1
FEATURE_KIND = "prosospeaker-feature"
SCENARIOS = ("ALL", "TTS", "VC")

_ARCH_ALIASES = {"speaker": "ecapa-tdnn", "ecapa-tdnn": "ecapa-tdnn",
                 "prosody": "prosody-encoder", "prosody-encoder": "prosody-encoder"}
_PRESETS = {
    ("ecapa-tdnn", "paper"): SpeakerEncoderConfig,
    ("ecapa-tdnn", "desk"): SpeakerEncoderConfig.desk,
    ("prosody-encoder", "paper"): ProsodyEncoderConfig,
    ("prosody-encoder", "desk"): ProsodyEncoderConfig.desk,
}


class CliError(Exception):
    """Precondition failure reported as a one-line message with exit status 2."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    manifest: str | None = None
    speaker_weights: str | None = None
    prosody_weights: str | None = None
    model: str | None = None
    profile: str = "none"
    out: str | None = None
    seed: int = 0
    workers: int = 1

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        get = lambda k, d=None: getattr(args, k, d)  # noqa: E731
        return cls(args.command, get("manifest"), get("speaker_weights"), get("prosody_weights"),
                   get("model"), get("profile") or "none", get("out"), get("seed") or 0,
                   worker_count(get("workers")))

    def validate(self):
        for name in ("manifest", "speaker_weights", "prosody_weights", "model"):
            path = getattr(self, name)
            if path is not None and not os.path.isfile(path):
                raise CliError(f"{name.replace('_', ' ')} not found: {path}")
        if self.profile not in PROFILES:
            raise CliError(f"unknown profile {self.profile!r}; choose from {sorted(PROFILES)}")


# -- shared helpers -------------------------------------------------------------

def _dump_json(path, obj):
    obj = {"format_version": FORMAT_VERSION, **obj}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_text(path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return repr(float(x))


def feature_path(features_dir, record_path: str, profile: str = "none") -> str:
    """Feature file for a manifest entry: ``<dir>/<profile>/<record path>.feat``."""
    rel = os.path.normpath(record_path).lstrip(os.sep)
    if os.path.isabs(record_path):
        rel = rel.replace(":", "")
    return os.path.join(features_dir, profile, rel + ".feat")


def save_feature(path, values, source: str, profile: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    archive.save(path, {"f": np.asarray(values, dtype=np.float64)},
                 {"kind": FEATURE_KIND, "format_version": FORMAT_VERSION,
                  "source": source, "profile": profile}, dtype="<f8")


def load_feature(path) -> np.ndarray:
    tensors, meta = archive.load(path)
    if meta.get("kind") != FEATURE_KIND or "f" not in tensors:
        raise FeatureError(f"{path} is not a feature file")
    return tensors["f"]


def _load_weights_pair(cfg: RunConfig):
    if not cfg.speaker_weights or not cfg.prosody_weights:
        raise CliError("both --speaker-weights and --prosody-weights are required")
    sw, pw = load_weights(cfg.speaker_weights), load_weights(cfg.prosody_weights)
    if sw.architecture != "ecapa-tdnn" or pw.architecture != "prosody-encoder":
        raise CliError("speaker weights must be ecapa-tdnn and prosody weights prosody-encoder")
    return sw, pw


def extract_records(corpus, records, features_dir, profile, sw, pw, force=False, workers=1):
    """Write missing feature files; returns (computed, skipped, failures)."""
    todo, skipped = [], 0
    for r in records:
        out = feature_path(features_dir, r.path, profile)
        if os.path.exists(out) and not force:
            skipped += 1
        else:
            todo.append((r, out))

    def one(item):
        r, out = item
        try:
            f = extract_file(corpus.resolve(r), sw, pw, profile)
            save_feature(out, f.values, r.path, profile)
            return None
        except (AudioError, FeatureError, WeightError, ValueError, OSError) as exc:
            return (r.path, str(exc))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, todo))
    else:
        results = [one(item) for item in todo]
    failures = [res for res in results if res is not None]
    for path, msg in failures:
        log.error("extract failed for %s: %s", path, msg)
    return len(todo) - len(failures), skipped, failures


def load_matrix(records, features_dir, profile="none") -> np.ndarray:
    rows, missing = [], []
    for r in records:
        p = feature_path(features_dir, r.path, profile)
        if not os.path.exists(p):
            missing.append(r.path)
            continue
        rows.append(load_feature(p))
    if missing:
        more = f" (+{len(missing) - 3} more)" if len(missing) > 3 else ""
        raise CliError(f"missing {profile} features for {', '.join(missing[:3])}{more}; "
                       "run `extract` first")
    if not rows:
        raise CliError("no feature rows selected")
    F = np.vstack(rows)
    if F.shape[1] != FEATURE_DIM:
        raise CliError(f"feature files have {F.shape[1]} dims, expected {FEATURE_DIM}")
    return F


def _partition(corpus, name):
    part = corpus.partition(name)
    if len(part) == 0:
        raise CliError(f"manifest has no {name} partition")
    return part


def _fit(train, dev, features_dir, profile, grid, slice_name, workers):
    s = SLICES[slice_name]
    Xt = load_matrix(train, features_dir, profile)[:, s]
    Xd = load_matrix(dev, features_dir, profile)[:, s]
    return grid_search(Xt, train.labels, Xd, dev.labels, grid, workers=workers,
                       feature_slice=slice_name)


def evaluate(model, F_raw, labels, system_ids, scenario, profile) -> tuple[dict, metrics.RocCurve, dict]:
    """Metrics record, ROC curve and attribution rates for one scored feature matrix."""
    scores = model.score(F_raw[:, SLICES[model.feature_slice]])
    roc = metrics.roc_curve(scores, labels)
    pred = labels_from_scores(scores)
    labels = np.asarray(labels)
    record = {
        "auc": metrics.auc(roc),
        "eer": metrics.eer(roc),
        "balanced_accuracy": metrics.balanced_accuracy(pred, labels),
        "counts": {"REAL": int((labels == "REAL").sum()), "DF": int((labels == "DF").sum())},
        "scenario": scenario,
        "profile": profile,
    }
    attr = metrics.attribution_rates(pred, labels, system_ids)
    return record, roc, attr


def _scenario_records(test, scenario):
    try:
        return filter_by_kind(test, scenario)
    except ManifestError as exc:
        raise CliError(f"scenario {scenario}: {exc}") from None


# -- commands -------------------------------------------------------------------

def cmd_init(args, cfg: RunConfig) -> int:
    arch = _ARCH_ALIASES[args.arch]
    w = init_weights(arch, _PRESETS[(arch, args.preset)](), cfg.seed)
    save_weights(args.out, w)
    print(f"{args.out} {arch} preset={args.preset} seed={cfg.seed} sha256={archive.digest(args.out)}")
    return 0


def cmd_synth_corpus(args, cfg: RunConfig) -> int:
    c = make_synthetic_corpus(cfg.seed, args.n, args.out)
    print(f"wrote {len(c)} files and manifest.csv to {args.out}")
    return 0


def cmd_degrade(args, cfg: RunConfig) -> int:
    a = load_wav(args.input)
    write_wav(args.output, degrade(a, cfg.profile))
    return 0


def cmd_extract(args, cfg: RunConfig) -> int:
    corpus = parse_manifest(cfg.manifest)
    sw, pw = _load_weights_pair(cfg)
    records = corpus.records
    if args.partition:
        records = corpus.partition(args.partition).records
    done, skipped, failures = extract_records(corpus, records, cfg.out, cfg.profile, sw, pw,
                                              args.force, cfg.workers)
    print(f"extracted {done}, skipped {skipped} existing, failed {len(failures)}")
    for path, msg in failures:
        print(f"FAILED {path}: {msg}", file=sys.stderr)
    return 1 if failures else 0


def _train_dev(args, cfg: RunConfig):
    """Train and dev records from one partitioned manifest or from two separate ones."""
    if args.train or args.dev:
        if not (args.train and args.dev):
            raise CliError("--train and --dev must be given together")
        train, dev = parse_manifest(args.train), parse_manifest(args.dev)
        if train.root != dev.root:
            raise CliError("--train and --dev manifests must live in the same directory")
        return train, dev
    if not cfg.manifest:
        raise CliError("give --manifest or both --train and --dev")
    corpus = parse_manifest(cfg.manifest)
    return _partition(corpus, "train"), _partition(corpus, "dev")


def cmd_train(args, cfg: RunConfig) -> int:
    grid = parse_grid(args.grid)
    train, dev = _train_dev(args, cfg)
    res = _fit(train, dev, args.features, cfg.profile, grid, args.slice, cfg.workers)
    save_model(cfg.out, res.model, res)
    _dump_json(cfg.out + ".grid.json", {
        "entries": res.entries, "best_index": res.best_index, "best": res.best,
        "sigma2": res.sigma2, "feature_slice": args.slice,
    })
    b = res.best
    print(f"best of {len(res.entries)}: kernel={b['kernel']} C={b['C']:g} "
          f"gamma={b['gamma_mode']} dev BA={b['dev_balanced_accuracy']:.4f}")
    return 0


def _tag(*parts) -> str:
    return "_".join(parts)


def cmd_eval(args, cfg: RunConfig) -> int:
    corpus = parse_manifest(cfg.manifest)
    model, _ = load_model(cfg.model)
    test = _partition(corpus, args.partition)
    if cfg.speaker_weights or cfg.prosody_weights:
        sw, pw = _load_weights_pair(cfg)
        _, _, failures = extract_records(corpus, test.records, args.features, cfg.profile,
                                         sw, pw, False, cfg.workers)
        if failures:
            raise CliError(f"{len(failures)} test files could not be extracted")
    os.makedirs(cfg.out, exist_ok=True)
    scenarios = SCENARIOS if args.kinds == "each" else (args.kinds,)
    for scenario in scenarios:
        sub = _scenario_records(test, scenario)
        F = load_matrix(sub, args.features, cfg.profile)
        want = SLICES[model.feature_slice].stop - SLICES[model.feature_slice].start
        if model.dim != want:
            raise CliError(f"model expects {model.dim} features but slice "
                           f"{model.feature_slice} has {want}")
        record, roc, attr = evaluate(model, F, sub.labels, [r.system_id for r in sub],
                                     scenario, cfg.profile)
        tag = _tag(model.feature_slice, scenario, cfg.profile)
        _dump_json(os.path.join(cfg.out, f"metrics_{tag}.json"), record)
        _write_text(os.path.join(cfg.out, f"roc_{tag}.csv"), _csv_text(
            ("threshold", "fpr", "tpr"),
            [(_fmt(t), _fmt(a), _fmt(b)) for t, a, b in zip(roc.thresholds, roc.fpr, roc.tpr)]))
        _write_text(os.path.join(cfg.out, f"attribution_{tag}.csv"), _csv_text(
            ("system_id", "label", "n", "correct", "rate"),
            [(sid, v["label"], v["n"], v["correct"], _fmt(v["rate"])) for sid, v in attr.items()]))
        if args.svg:
            _write_text(os.path.join(cfg.out, f"roc_{tag}.svg"),
                        plots.roc_svg({f"{scenario} AUC {record['auc']:.3f}": (roc.fpr, roc.tpr)},
                                      f"ROC {model.feature_slice} / {scenario} / {cfg.profile}"))
        print(f"{tag}: AUC={record['auc']:.4f} EER={record['eer']:.4f} "
              f"BA={record['balanced_accuracy']:.4f}")
    return 0


def cmd_ablate(args, cfg: RunConfig) -> int:
    """Train prosody-only, speaker-only and combined models; score each scenario."""
    corpus = parse_manifest(cfg.manifest)
    grid = parse_grid(args.grid)
    test = _partition(corpus, "test")
    os.makedirs(cfg.out, exist_ok=True)
    rows, table = [], {}
    for slice_name in ("prosody", "speaker", "combined"):
        res = _fit(_partition(corpus, "train"), _partition(corpus, "dev"), args.features,
                   "none", grid, slice_name, cfg.workers)
        table[slice_name] = {}
        for scenario in ("TTS", "VC", "ALL"):
            sub = _scenario_records(test, scenario)
            F = load_matrix(sub, args.features, cfg.profile)
            record, _, _ = evaluate(res.model, F, sub.labels, [r.system_id for r in sub],
                                    scenario, cfg.profile)
            table[slice_name][scenario] = {k: record[k] for k in
                                           ("auc", "eer", "balanced_accuracy", "counts")}
            rows.append((slice_name, scenario, _fmt(record["auc"]), _fmt(record["eer"]),
                         _fmt(record["balanced_accuracy"])))
            print(f"{slice_name:8s} {scenario:3s} AUC={record['auc']:.4f} EER={record['eer']:.4f}")
    _dump_json(os.path.join(cfg.out, "ablation.json"), {"profile": cfg.profile, "models": table})
    _write_text(os.path.join(cfg.out, "ablation.csv"),
                _csv_text(("model", "scenario", "auc", "eer", "balanced_accuracy"), rows))
    if args.svg:
        _write_text(os.path.join(cfg.out, "ablation_auc.svg"), plots.bar_svg(
            [f"{m[:4]}/{s}" for m, s, *_ in rows], [float(r[2]) for r in rows],
            "AUC per model and scenario", "AUC"))
    return 0


def cmd_correlate(args, cfg: RunConfig) -> int:
    corpus = parse_manifest(cfg.manifest)
    records = corpus.partition(args.partition) if args.partition else corpus
    if len(records) < 2:
        raise CliError("correlation needs at least 2 feature files")
    F = load_matrix(records, args.features, cfg.profile)
    cm = metrics.pearson_matrix(F, SPEAKER_DIM)
    os.makedirs(cfg.out, exist_ok=True)

    def matrix_csv(M):
        return "".join(",".join(_fmt(v) for v in row) + "\n" for row in M)

    _write_text(os.path.join(cfg.out, "correlation.csv"), matrix_csv(cm.R))
    _write_text(os.path.join(cfg.out, "correlation_display.csv"), matrix_csv(cm.display()))
    stats = metrics.block_stats(cm)
    _dump_json(os.path.join(cfg.out, "block_stats.json"),
               {**stats, "n_rows": int(F.shape[0]), "split": SPEAKER_DIM})
    if args.svg:
        _write_text(os.path.join(cfg.out, "correlation.svg"),
                    plots.heatmap_svg(cm.display(), "feature cross-correlation", SPEAKER_DIM))
    for k, v in stats.items():
        print(f"{k}: mean |r| = {v['mean']:.4f} (std {v['std']:.4f})")
    return 0


def cmd_report(args, cfg: RunConfig) -> int:
    """Collect metrics and ablation JSON files from a run directory into one markdown table."""
    runs = args.runs
    names = sorted(n for n in os.listdir(runs) if n.startswith("metrics_") and n.endswith(".json"))
    lines = ["| run | scenario | profile | AUC % | EER % | BA % |", "|---|---|---|---|---|---|"]
    collected = {}
    for n in names:
        with open(os.path.join(runs, n), encoding="utf-8") as fh:
            m = json.load(fh)
        key = n[len("metrics_"):-len(".json")]
        collected[key] = m
        lines.append(f"| {key} | {m['scenario']} | {m['profile']} | {metrics.percent(m['auc'])} | "
                     f"{metrics.percent(m['eer'])} | {metrics.percent(m['balanced_accuracy'])} |")
    abl = os.path.join(runs, "ablation.json")
    if os.path.exists(abl):
        with open(abl, encoding="utf-8") as fh:
            table = json.load(fh)["models"]
        lines += ["", "| model | TTS AUC % | VC AUC % | ALL AUC % |", "|---|---|---|---|"]
        for model_name, row in table.items():
            lines.append(f"| {model_name} | " + " | ".join(
                str(metrics.percent(row[s]["auc"])) for s in ("TTS", "VC", "ALL")) + " |")
        collected["ablation"] = table
    if not collected:
        raise CliError(f"no metrics_*.json or ablation.json in {runs}")
    out = cfg.out or os.path.join(runs, "report.md")
    _write_text(out, "\n".join(lines) + "\n")
    _dump_json(os.path.splitext(out)[0] + ".json", {"runs": collected})
    print(f"wrote {out}")
    return 0


# -- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prosospeaker", description=__doc__.splitlines()[0])
    p.add_argument("--log-file", help="also write timestamped log records here")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, manifest=False, weights=False, profile=False, workers=False):
        if manifest:
            sp.add_argument("--manifest", required=True)
        if weights:
            sp.add_argument("--speaker-weights")
            sp.add_argument("--prosody-weights")
        if profile:
            sp.add_argument("--profile", default="none", choices=sorted(PROFILES))
        if workers:
            sp.add_argument("--workers", type=int, default=1,
                            help="parallel workers (PROSOSPEAK_WORKERS overrides)")

    sp = sub.add_parser("init", help="write a seeded random weight archive")
    sp.add_argument("--arch", required=True, choices=sorted(_ARCH_ALIASES))
    sp.add_argument("--preset", default="paper", choices=("paper", "desk"))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("synth-corpus", help="generate the procedural three-class corpus")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n", type=int, default=40, help="utterances per class")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("degrade", help="apply a codec-surrogate profile to one WAV file")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", dest="output", required=True)
    sp.add_argument("--profile", required=True, choices=sorted(PROFILES))

    sp = sub.add_parser("extract", help="compute one feature file per manifest entry")
    common(sp, manifest=True, weights=True, profile=True, workers=True)
    sp.add_argument("--out", required=True, help="feature directory")
    sp.add_argument("--partition", choices=("train", "dev", "test"))
    sp.add_argument("--force", action="store_true", help="recompute existing feature files")

    sp = sub.add_parser("train", help="grid-search an SVM on train, select on dev")
    common(sp, profile=True, workers=True)
    sp.add_argument("--manifest", help="manifest with train and dev partitions")
    sp.add_argument("--train", help="train-only manifest (with --dev)")
    sp.add_argument("--dev", help="dev-only manifest (with --train)")
    sp.add_argument("--features", required=True)
    sp.add_argument("--grid", default="default")
    sp.add_argument("--slice", default="combined", choices=sorted(SLICES))
    sp.add_argument("--out", required=True, help="model file")

    sp = sub.add_parser("eval", help="score the test partition and write reports")
    common(sp, manifest=True, weights=True, profile=True, workers=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--kinds", default="ALL", choices=SCENARIOS + ("each",))
    sp.add_argument("--partition", default="test", choices=("train", "dev", "test"))
    sp.add_argument("--svg", action="store_true")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("ablate", help="prosody-only, speaker-only and combined models")
    common(sp, manifest=True, profile=True, workers=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--grid", default="default")
    sp.add_argument("--svg", action="store_true")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("correlate", help="feature cross-correlation matrix and block stats")
    common(sp, manifest=True, profile=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--partition", choices=("train", "dev", "test"))
    sp.add_argument("--svg", action="store_true")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("report", help="summarize metrics JSON files of a run directory")
    sp.add_argument("--runs", required=True)
    sp.add_argument("--out")
    return p


COMMANDS = {
    "init": cmd_init, "synth-corpus": cmd_synth_corpus, "degrade": cmd_degrade,
    "extract": cmd_extract, "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate,
    "correlate": cmd_correlate, "report": cmd_report,
}


def _setup_logging(args):
    root = logging.getLogger("prosospeaker")
    root.handlers.clear()
    root.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    err = logging.StreamHandler(sys.stderr)
    err.setLevel(logging.DEBUG if args.verbose else logging.WARNING)
    err.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    root.addHandler(err)
    if args.log_file:
        fh = logging.FileHandler(args.log_file)
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s %(message)s"))
        root.addHandler(fh)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args)
    try:
        cfg = RunConfig.from_args(args)
        cfg.validate()
        return COMMANDS[args.command](args, cfg)
    except (CliError, ManifestError, AudioError, WeightError, FeatureError, SvmError,
            archive.ArchiveError, metrics.MetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
