"""End-to-end pipeline orchestration.

Wires the stages together per split with no leakage: label-tree embeddings,
node classifiers, and SVMs are all retrained from that split's training
snippets only. Used by both the CLI commands and the acceptance suite.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from . import audio, features
from .config import RunConfig, derive_seed
from .embedding import (
    EmbeddingModel,
    build_label_tree,
    category_mean_vectors,
    embed_frames,
    load_embedding,
    save_embedding,
    train_node_classifiers,
)
from .errors import DataError
from .evalharness import (
    SYSTEMS,
    SplitPlan,
    accuracy,
    build_report,
    duration_sweep,
    late_fused_segment_posteriors,
    load_external_splits,
    macro_f1,
    make_splits,
    per_category_f1,
)
from .fusion import load_svm, save_svm, svm_posteriors, train_linear_svm
from .models import (
    CnnModel,
    CrnnModel,
    RnnModel,
    TrainConfig,
    extract_features,
    load_model,
    save_model,
    train_model,
)

log = logging.getLogger("earshot")

SVM_EPOCHS = 500


# --- synthetic corpus -------------------------------------------------------


def generate_corpus(cfg: RunConfig, base_dir) -> tuple[list[dict], list[dict]]:
    """Write WAVs plus both manifests; returns (dataset records, recipe)."""
    base_dir = Path(base_dir)
    wav_dir = base_dir / "wavs"
    wav_dir.mkdir(parents=True, exist_ok=True)
    categories = [f"scene{i:02d}" for i in range(cfg.synth_categories)]
    specs = audio.default_scene_specs(categories)
    records, recipe = [], []
    for spec in specs:
        for i in range(cfg.synth_per_category):
            seed = derive_seed(cfg.seed, f"synth:{spec.category}:{i}")
            clip = audio.synth_scene(spec, cfg.synth_duration_s, seed)
            sid = f"{spec.category}_{i:03d}"
            rel = f"wavs/{sid}.wav"
            audio.save_wav(base_dir / rel, clip)
            records.append({"path": rel, "category": spec.category, "snippet_id": sid})
            recipe.append({"source_id": sid, "category": spec.category,
                           "seed": seed, "duration_s": cfg.synth_duration_s})
    return records, recipe


# --- feature extraction -----------------------------------------------------


def clip_segment_features(clip: audio.AudioClip, params: features.FeatureParams):
    """Per-segment frame features on the segment grid.

    The noise floor comes from the whole snippet's own framing, so all
    segments share one floor. Returns (channels, n_segments,
    frames_per_segment) with each channel of shape (S*T, dim).
    """
    segments = audio.segment_snippet(clip)
    snippet_frames = audio.frame_samples(clip.samples, clip.sample_rate)
    floor = features.noise_floor(
        features.power_spectrum(snippet_frames.frames, params.n_fft), params)

    per_channel: list[list[np.ndarray]] = [[] for _ in features.CHANNELS]
    fps = None
    for seg in segments:
        spectra = features.power_spectrum(audio.frame_segment(seg).frames, params.n_fft)
        fps = spectra.shape[0] if fps is None else fps
        fg = np.maximum(spectra - floor[None, :], 0.0)
        for c, (kind, variant) in enumerate(features.CHANNELS):
            src = spectra if variant == features.WITH_BG else fg
            per_channel[c].append(features.kind_features(kind, src, params).astype(np.float32))
    channels = [np.vstack(blocks) for blocks in per_channel]
    return channels, len(segments), fps


def extract_all_features(records: list[dict], cfg: RunConfig, base_dir, cache_dir):
    """Populate/read the feature cache for every manifest record.

    Returns (dataset, errors): dataset maps snippet_id to a dict with the
    channel arrays, segment layout, and category; unreadable files are
    reported in errors and skipped.
    """
    base_dir = Path(base_dir)
    dataset: dict[str, dict] = {}
    errors: list[str] = []
    params = cfg.features
    for rec in records:
        sid = rec["snippet_id"]
        try:
            if features.cache_is_current(cache_dir, sid, params):
                channels, sidecar = features.read_feature_cache(cache_dir, sid)
                n_segments = sidecar["n_segments"]
                fps = sidecar["frames_per_segment"]
                duration_s = sidecar["duration_s"]
            else:
                clip = audio.load_wav(base_dir / rec["path"], allow_any_rate=cfg.allow_any_rate)
                channels, n_segments, fps = clip_segment_features(clip, params)
                duration_s = clip.duration_s
                features.write_feature_cache(
                    cache_dir, sid, channels, params,
                    extra={"n_segments": n_segments, "frames_per_segment": fps,
                           "duration_s": duration_s},
                )
        except DataError as exc:
            errors.append(f"{rec['path']}: {exc}")
            continue
        dataset[sid] = {
            "channels": channels,
            "n_segments": n_segments,
            "frames_per_segment": fps,
            "duration_s": duration_s,
            "category": rec["category"],
        }
    return dataset, errors


# --- per-split pipeline -----------------------------------------------------


def build_embeddings(dataset: dict, train_ids: list[str], cat_to_id: dict[str, int],
                     cfg: RunConfig, seed_base: int) -> list[EmbeddingModel]:
    """Train the 6 per-channel embedding models from training frames only."""
    n_categories = len(cat_to_id)
    models = []
    for c in range(features.N_CHANNELS):
        feats = np.vstack([dataset[sid]["channels"][c] for sid in train_ids])
        labels = np.concatenate([
            np.full(dataset[sid]["channels"][c].shape[0], cat_to_id[dataset[sid]["category"]])
            for sid in train_ids
        ])
        if feats.shape[0] > cfg.lte_max_frames:
            rng = np.random.default_rng(derive_seed(seed_base, f"lte-subsample:{c}"))
            keep = []
            for cat in range(n_categories):
                rows = np.flatnonzero(labels == cat)
                quota = max(1, int(round(cfg.lte_max_frames * rows.size / feats.shape[0])))
                keep.append(rng.choice(rows, min(quota, rows.size), replace=False))
            keep = np.sort(np.concatenate(keep))
            feats, labels = feats[keep], labels[keep]
        means = category_mean_vectors(feats, labels, n_categories)
        tree = build_label_tree(means)
        models.append(train_node_classifiers(tree, feats, labels, channel=c))
    return models


def snippet_tensor(entry: dict, emb_models: list[EmbeddingModel]) -> np.ndarray:
    """Embed one snippet's frames: (S, F, T, D) float32."""
    s, fps = entry["n_segments"], entry["frames_per_segment"]
    f = emb_models[0].n_outputs
    x = np.empty((s, f, fps, features.N_CHANNELS), dtype=np.float32)
    for c, model in enumerate(emb_models):
        emb = embed_frames(model, entry["channels"][c]).astype(np.float32)
        for seg in range(s):
            x[seg, :, :, c] = emb[seg * fps : (seg + 1) * fps].T
    return x


def needed_networks(systems) -> list[str]:
    nets = []
    for system in systems:
        wanted = ["cnn", "rnn"] if system.startswith("lf-") else [system]
        for net in wanted:
            if net not in nets:
                nets.append(net)
    return nets


def build_network(net: str, feat_height: int, n_classes: int, cfg: RunConfig, seed: int):
    if net == "cnn":
        return CnnModel(feat_height, n_classes, q=cfg.q, widths=cfg.widths,
                        dropout_rate=cfg.dropout_cnn, seed=seed)
    if net == "rnn":
        return RnnModel(feat_height * features.N_CHANNELS, n_classes, hidden=cfg.hidden,
                        dropout_rate=cfg.dropout_rnn, seed=seed)
    if net.startswith("ef-"):
        return CrnnModel(feat_height, features.N_CHANNELS, n_classes,
                         fusion_kind=net.split("-", 1)[1], q=cfg.q, widths=cfg.widths,
                         hidden=cfg.hidden, transform_dim=cfg.transform_dim,
                         dropout_conv=cfg.dropout_cnn, dropout_rec=cfg.dropout_rnn,
                         dropout_fusion=cfg.dropout_fusion, seed=seed)
    raise DataError(f"unknown network {net!r}")


def _write_train_log(path: Path, history) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "train_accuracy"])
        for row in history:
            writer.writerow([row.epoch, f"{row.loss:.6f}", f"{row.accuracy:.4f}"])


def run_split(split_idx: int, train_ids: list[str], test_ids: list[str], dataset: dict,
              cat_to_id: dict[str, int], cfg: RunConfig, artifact_dir=None,
              mode: str = "train"):
    """Train (or load) all artifacts for one split and score the test set.

    Returns the split result: (system, duration) -> accuracy / macro F1 /
    per-category F1 over the test snippets.
    """
    seed_base = derive_seed(cfg.seed, f"split:{split_idx}")
    n_classes = len(cat_to_id)
    art = Path(artifact_dir) if artifact_dir is not None else None
    if mode == "load" and art is None:
        raise DataError("loading artifacts requires an artifact directory")

    if mode == "train":
        emb_models = build_embeddings(dataset, train_ids, cat_to_id, cfg, seed_base)
        if art is not None:
            for c, emb in enumerate(emb_models):
                save_embedding(art / "lte" / f"split_{split_idx:02d}" / f"channel_{c}.emb", emb)
    else:
        emb_models = [
            load_embedding(art / "lte" / f"split_{split_idx:02d}" / f"channel_{c}.emb")
            for c in range(features.N_CHANNELS)
        ]

    feat_height = emb_models[0].n_outputs
    tensors = {sid: snippet_tensor(dataset[sid], emb_models) for sid in train_ids + test_ids}
    train_x = np.concatenate([tensors[sid] for sid in train_ids], axis=0)
    train_y = np.concatenate([
        np.full(tensors[sid].shape[0], cat_to_id[dataset[sid]["category"]])
        for sid in train_ids
    ])

    net_posteriors: dict[str, dict[str, np.ndarray]] = {}
    nets = needed_networks(cfg.systems)
    for net in nets:
        model_path = art / "models" / f"split_{split_idx:02d}" / f"{net}.ckpt" if art else None
        svm_path = art / "svms" / f"split_{split_idx:02d}" / f"{net}.svm" if art else None
        if mode == "train":
            model = build_network(net, feat_height, n_classes, cfg,
                                  derive_seed(seed_base, f"model:{net}"))
            tcfg = TrainConfig(lam=cfg.lam, lr=cfg.lr, batch_size=cfg.batch_size,
                               max_epochs=cfg.max_epochs,
                               seed=derive_seed(seed_base, f"train:{net}"))
            log.info("split %d: training %s (%d segments)", split_idx, net, train_x.shape[0])
            history = train_model(model, train_x, train_y, tcfg)
            train_feats = extract_features(model, train_x)
            svm = train_linear_svm(train_feats, train_y, c_svm=1.0, epochs=SVM_EPOCHS,
                                   seed=derive_seed(seed_base, f"svm:{net}"))
            if art is not None:
                save_model(model_path, model)
                save_svm(svm_path, svm)
                _write_train_log(
                    art / "models" / f"split_{split_idx:02d}" / f"{net}_train_log.csv", history)
        else:
            if not (model_path.exists() and svm_path.exists()):
                raise DataError(f"missing artifacts for {net} in split {split_idx}: "
                                f"{model_path} / {svm_path}")
            model = load_model(model_path)
            svm = load_svm(svm_path)
        net_posteriors[net] = {
            sid: svm_posteriors(svm, extract_features(model, tensors[sid]))
            for sid in test_ids
        }

    split_result = {}
    truth_by_sid = {sid: cat_to_id[dataset[sid]["category"]] for sid in test_ids}
    max_k = min(dataset[sid]["n_segments"] for sid in test_ids)
    total_s = min(dataset[sid]["duration_s"] for sid in test_ids)
    for system in cfg.systems:
        if system.startswith("lf-"):
            method = system.split("-", 1)[1]
            seg_posts = {
                sid: late_fused_segment_posteriors(
                    net_posteriors["cnn"][sid], net_posteriors["rnn"][sid], method)
                for sid in test_ids
            }
        else:
            seg_posts = net_posteriors[system]
        by_duration = duration_sweep(system, seg_posts, max_k=max_k, total_s=total_s)
        for dur, preds_by_sid in by_duration.items():
            order = sorted(preds_by_sid)
            preds = [preds_by_sid[sid] for sid in order]
            truths = [truth_by_sid[sid] for sid in order]
            split_result[(system, dur)] = {
                "accuracy": accuracy(preds, truths),
                "f1": macro_f1(preds, truths, n_classes),
                "per_category_f1": per_category_f1(preds, truths, n_classes),
            }
    return split_result


def split_plan_for(records: list[dict], cfg: RunConfig) -> SplitPlan:
    if cfg.splits_dir:
        return load_external_splits(cfg.splits_dir, cfg.n_splits)
    return make_splits(records, cfg.n_splits, cfg.train_ratio, derive_seed(cfg.seed, "splits"))


def save_split_plan(plan: SplitPlan, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k, (train, test) in enumerate(plan.splits):
        (out_dir / f"train_{k}.txt").write_text("\n".join(train) + "\n")
        (out_dir / f"test_{k}.txt").write_text("\n".join(test) + "\n")


def run_experiment(records: list[dict], cfg: RunConfig, base_dir, cache_dir,
                   artifact_dir=None, mode: str = "train"):
    """Full protocol: features, splits, per-split training, duration sweep.

    Returns (report, split_results, categories).
    """
    dataset, errors = extract_all_features(records, cfg, base_dir, cache_dir)
    if errors:
        raise DataError("feature extraction failed for: " + "; ".join(errors))
    categories = sorted({rec["category"] for rec in records})
    cat_to_id = {cat: i for i, cat in enumerate(categories)}
    saved_splits = Path(artifact_dir) / "splits" if artifact_dir is not None else None
    if mode == "load" and saved_splits is not None and saved_splits.exists():
        plan = load_external_splits(saved_splits, cfg.n_splits)
    else:
        plan = split_plan_for(records, cfg)
    if mode == "train" and artifact_dir is not None:
        save_split_plan(plan, Path(artifact_dir) / "splits")
    split_results = []
    for k, (train_ids, test_ids) in enumerate(plan.splits):
        log.info("=== split %d/%d ===", k + 1, len(plan.splits))
        split_results.append(
            run_split(k, train_ids, test_ids, dataset, cat_to_id, cfg, artifact_dir, mode)
        )
    report = build_report(split_results, categories)
    return report, split_results, categories


def save_results_json(path, split_results: list[dict], categories: list[str]) -> None:
    """Raw per-split metrics, so reports can be regenerated without rerunning."""
    payload = {
        "categories": categories,
        "splits": [
            {
                f"{system}|{dur}": {
                    "accuracy": entry["accuracy"],
                    "f1": entry["f1"],
                    "per_category_f1": np.asarray(entry["per_category_f1"]).tolist(),
                }
                for (system, dur), entry in sr.items()
            }
            for sr in split_results
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload))


def load_results_json(path) -> tuple[list[dict], list[str]]:
    payload = json.loads(Path(path).read_text())
    split_results = []
    for sr in payload["splits"]:
        parsed = {}
        for key, entry in sr.items():
            system, dur = key.rsplit("|", 1)
            parsed[(system, int(dur))] = {
                "accuracy": entry["accuracy"],
                "f1": entry["f1"],
                "per_category_f1": np.asarray(entry["per_category_f1"]),
            }
        split_results.append(parsed)
    return split_results, payload["categories"]
