"""Dataset splits, classification metrics, the duration sweep, and reports.

The sweep evaluates each system on growing prefixes of a snippet's 4 s
segments (k = 1..8, i.e. 4..30 seconds of listening) and reports accuracy
and macro F1 per system and duration, plus per-category F1 curves.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .fusion import Posterior, aggregate_segments, late_fuse, predict

SYSTEMS = ("cnn", "rnn", "ef-sum", "ef-max", "ef-concat", "lf-max", "lf-mean", "lf-mult")
DURATIONS_S = (4, 8, 12, 16, 20, 24, 28, 30)


def system_aggregation_method(system: str) -> str:
    """Late-fusion systems aggregate segments with their own fusion method;
    everything else multiplies segment-wise results."""
    if system.startswith("lf-"):
        return system.split("-", 1)[1]
    return "mult"


def duration_for_k(k: int, max_k: int = 8, total_s: float = 30.0) -> int:
    """Listening-duration label for aggregating k segments: 4k seconds,
    except that consuming every segment means the whole snippet (the last
    segment overlaps), e.g. 30 s for k = 8."""
    return int(round(total_s)) if k == max_k else 4 * k


@dataclass
class SplitPlan:
    n_splits: int
    seed: int
    splits: list[tuple[list[str], list[str]]] = field(default_factory=list)


def make_splits(records: list[dict], n_splits: int = 20, train_ratio: float = 0.8,
                seed: int = 0) -> SplitPlan:
    """Stratified random train/test splits over snippet ids.

    records need snippet_id and category fields. Every category keeps
    roughly train_ratio of its snippets in training and at least one on
    each side; splits differ only by the seeded shuffles.
    """
    by_cat: dict[str, list[str]] = {}
    for rec in records:
        by_cat.setdefault(rec["category"], []).append(rec["snippet_id"])
    for cat, ids in by_cat.items():
        if len(ids) < 2:
            raise DataError(f"category {cat!r} has {len(ids)} snippet(s); need >= 2")

    rng = np.random.default_rng(seed)
    plan = SplitPlan(n_splits=n_splits, seed=seed)
    for _ in range(n_splits):
        train: list[str] = []
        test: list[str] = []
        for cat in sorted(by_cat):
            ids = sorted(by_cat[cat])
            order = rng.permutation(len(ids))
            n_train = int(round(train_ratio * len(ids)))
            n_train = min(max(n_train, 1), len(ids) - 1)
            train.extend(ids[i] for i in order[:n_train])
            test.extend(ids[i] for i in order[n_train:])
        plan.splits.append((sorted(train), sorted(test)))
    return plan


def load_external_splits(split_dir, n_splits: int) -> SplitPlan:
    """Read train_<k>.txt / test_<k>.txt files (one snippet id per line).

    Indices may start at 0 or 1; both are accepted.
    """
    split_dir = Path(split_dir)
    start = 0 if (split_dir / "train_0.txt").exists() else 1
    plan = SplitPlan(n_splits=n_splits, seed=-1)
    for k in range(start, start + n_splits):
        train_path = split_dir / f"train_{k}.txt"
        test_path = split_dir / f"test_{k}.txt"
        if not (train_path.exists() and test_path.exists()):
            raise DataError(f"missing split files for split {k} under {split_dir}")
        train = [line.strip() for line in train_path.read_text().splitlines() if line.strip()]
        test = [line.strip() for line in test_path.read_text().splitlines() if line.strip()]
        if set(train) & set(test):
            raise DataError(f"split {k}: train and test share snippet ids")
        plan.splits.append((train, test))
    return plan


def accuracy(preds, truths) -> float:
    preds = np.asarray(preds)
    truths = np.asarray(truths)
    if preds.size == 0 or preds.shape != truths.shape:
        raise DataError("predictions and truths must be equal-length and non-empty")
    return 100.0 * float((preds == truths).mean())


def confusion_matrix(preds, truths, n_categories: int) -> np.ndarray:
    cm = np.zeros((n_categories, n_categories), dtype=np.int64)
    for p, t in zip(preds, truths):
        cm[t, p] += 1
    return cm


def per_category_f1(preds, truths, n_categories: int) -> np.ndarray:
    """F1 per category in [0, 1]; any undefined precision/recall/F1 is 0."""
    cm = confusion_matrix(preds, truths, n_categories)
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    precision = np.divide(tp, tp + fp, out=np.zeros_like(tp), where=(tp + fp) > 0)
    recall = np.divide(tp, tp + fn, out=np.zeros_like(tp), where=(tp + fn) > 0)
    denom = precision + recall
    return np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)


def macro_f1(preds, truths, n_categories: int) -> float:
    preds = np.asarray(preds)
    truths = np.asarray(truths)
    if preds.size == 0 or preds.shape != truths.shape:
        raise DataError("predictions and truths must be equal-length and non-empty")
    return 100.0 * float(per_category_f1(preds, truths, n_categories).mean())


def sweep_predictions(segment_posteriors: dict[str, np.ndarray], k: int,
                      method: str) -> dict[str, int]:
    """Aggregate the first k segment posteriors of every snippet and decide.

    segment_posteriors: snippet id -> (S, C) array in temporal order.
    """
    out = {}
    for sid, post in segment_posteriors.items():
        rows = [Posterior(values=post[i] / post[i].sum()) for i in range(min(k, post.shape[0]))]
        out[sid] = predict(aggregate_segments(rows, method=method))
    return out


def duration_sweep(system: str, segment_posteriors: dict[str, np.ndarray],
                   max_k: int = 8, total_s: float = 30.0) -> dict[int, dict[str, int]]:
    """Predictions for every listening duration 4k s (30 s at k = max_k)."""
    if system not in SYSTEMS:
        raise DataError(f"unknown system {system!r}; expected one of {SYSTEMS}")
    method = system_aggregation_method(system)
    return {
        duration_for_k(k, max_k, total_s): sweep_predictions(segment_posteriors, k, method)
        for k in range(1, max_k + 1)
    }


def late_fused_segment_posteriors(conv_posts: np.ndarray, rec_posts: np.ndarray,
                                  method: str) -> np.ndarray:
    """Per-segment late fusion of two (S, C) posterior arrays, renormalized."""
    fused = np.empty_like(conv_posts)
    for i in range(conv_posts.shape[0]):
        f = late_fuse(Posterior(values=conv_posts[i]), Posterior(values=rec_posts[i]), method)
        fused[i] = f.values / f.values.sum()
    return fused


@dataclass
class SweepReport:
    """Aggregated sweep results across splits."""

    systems: list[str]
    durations: list[int]
    categories: list[str]
    n_splits: int
    # (system, duration) -> dict with accuracy/f1 means and stddevs
    overall: dict[tuple[str, int], dict] = field(default_factory=dict)
    # (system, category, duration) -> mean F1
    per_category: dict[tuple[str, str, int], float] = field(default_factory=dict)

    def validate(self):
        for entry in self.overall.values():
            for key in ("accuracy", "f1"):
                if not 0.0 <= entry[key] <= 100.0:
                    raise DataError(f"metric {key} out of [0, 100]: {entry[key]}")


def build_report(split_results: list[dict], categories: list[str]) -> SweepReport:
    """split_results: one dict per split mapping (system, duration) ->
    {"accuracy": float, "f1": float, "per_category_f1": array}."""
    if not split_results:
        raise DataError("no split results to report")
    keys = sorted(split_results[0].keys())
    systems = sorted({k[0] for k in keys}, key=lambda s: SYSTEMS.index(s) if s in SYSTEMS else 99)
    durations = sorted({k[1] for k in keys})
    report = SweepReport(systems=systems, durations=durations, categories=categories,
                         n_splits=len(split_results))
    for system in systems:
        for dur in durations:
            accs = [sr[(system, dur)]["accuracy"] for sr in split_results]
            f1s = [sr[(system, dur)]["f1"] for sr in split_results]
            report.overall[(system, dur)] = {
                "accuracy": float(np.mean(accs)),
                "f1": float(np.mean(f1s)),
                "stddev": float(np.std(accs)),
            }
            cat_f1 = np.mean([sr[(system, dur)]["per_category_f1"] for sr in split_results], axis=0)
            for ci, cat in enumerate(categories):
                report.per_category[(system, cat, dur)] = float(100.0 * cat_f1[ci])
    report.validate()
    return report


def emit_report(report: SweepReport, out_dir, plots: bool = False) -> list[Path]:
    """Write overall and per-category CSVs (and optional PNG plots).

    Rows are sorted by (system, duration); CSVs use '.' decimals and a
    header row.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    overall_path = out_dir / "overall.csv"
    with open(overall_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["system", "duration_s", "accuracy", "f1", "n_splits", "stddev"])
        for system in report.systems:
            for dur in report.durations:
                entry = report.overall[(system, dur)]
                writer.writerow([
                    system, dur, f"{entry['accuracy']:.4f}", f"{entry['f1']:.4f}",
                    report.n_splits, f"{entry['stddev']:.4f}",
                ])
    written.append(overall_path)

    cat_path = out_dir / "per_category.csv"
    with open(cat_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["system", "category", "duration_s", "f1"])
        for system in report.systems:
            for cat in report.categories:
                for dur in report.durations:
                    writer.writerow([system, cat, dur,
                                     f"{report.per_category[(system, cat, dur)]:.4f}"])
    written.append(cat_path)

    if plots:
        written.extend(_plot_report(report, out_dir))
    return written


def _plot_report(report: SweepReport, out_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for metric in ("accuracy", "f1"):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for system in report.systems:
            ys = [report.overall[(system, d)][metric] for d in report.durations]
            ax.plot(report.durations, ys, marker="o", label=system)
        ax.set_xlabel("test signal length (s)")
        ax.set_ylabel(f"{metric} (%)")
        ax.legend(fontsize=8)
        ax.grid(True, alpha=0.3)
        path = out_dir / f"overall_{metric}.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    for system in report.systems:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for cat in report.categories:
            ys = [report.per_category[(system, cat, d)] for d in report.durations]
            ax.plot(report.durations, ys, marker=".", label=cat)
        ax.set_xlabel("test signal length (s)")
        ax.set_ylabel("F1 (%)")
        ax.set_title(system)
        ax.legend(fontsize=7)
        ax.grid(True, alpha=0.3)
        path = out_dir / f"per_category_{system}.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def write_dataset_manifest(path, records: list[dict]) -> None:
    """JSON lines manifest: one {path, category, snippet_id} per snippet."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_dataset_manifest(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    for rec in records:
        for key in ("path", "category", "snippet_id"):
            if key not in rec:
                raise DataError(f"manifest record missing {key!r}: {rec}")
    return records
