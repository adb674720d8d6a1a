"""Command-line entry point.

Subcommands: synth | features | tree | train | sweep | gradcheck | report.
Global flags: --config PATH, --seed N, --jobs N, --allow-any-rate, --out DIR.
Exit codes: 0 success, 1 data errors, 2 configuration errors, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment
from .audio import write_synth_manifest
from .config import RunConfig, derive_seed, load_config
from .embedding import save_embedding
from .errors import ConfigError, DataError, EarshotError, NumericalError
from .evalharness import SYSTEMS, build_report, emit_report, read_dataset_manifest, write_dataset_manifest
from .verify import run_all_checks

log = logging.getLogger("earshot")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="earshot",
                                     description="Acoustic scene classification toolkit")
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--jobs", type=int, default=None,
                        help="worker hint; execution stays deterministic")
    parser.add_argument("--allow-any-rate", action="store_true",
                        help="accept WAV files at rates other than 22050 Hz")
    parser.add_argument("--out", help="output directory (default from config)")
    parser.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus + manifest")
    p.add_argument("--categories", type=int, default=None)
    p.add_argument("--per-category", type=int, default=None)
    p.add_argument("--duration", type=float, default=None)

    sub.add_parser("features", help="populate the feature cache from the manifest")
    sub.add_parser("tree", help="build label-tree embedding models on all data")
    sub.add_parser("train", help="train networks and SVMs for every split").add_argument(
        "--systems", default=None, help="comma-separated subset of systems")
    sub.add_parser("sweep", help="duration sweep over trained artifacts").add_argument(
        "--systems", default=None)
    p = sub.add_parser("gradcheck", help="verify analytic gradients at tiny dims")
    p.add_argument("--profile", default="tiny", choices=["tiny"])
    p = sub.add_parser("report", help="re-emit report files from stored results")
    p.add_argument("--plots", action="store_true")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.allow_any_rate:
        cfg.allow_any_rate = True
    if getattr(args, "systems", None):
        cfg.systems = tuple(s.strip() for s in args.systems.split(",") if s.strip())
    if args.command == "synth":
        if args.categories is not None:
            cfg.synth_categories = args.categories
        if args.per_category is not None:
            cfg.synth_per_category = args.per_category
        if args.duration is not None:
            cfg.synth_duration_s = args.duration
    return cfg.validate()


def cmd_synth(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, recipe = experiment.generate_corpus(cfg, out)
    write_dataset_manifest(out / "dataset.jsonl", records)
    write_synth_manifest(out / "synth_manifest.json", recipe)
    log.info("wrote %d clips under %s", len(records), out)
    return 0


def cmd_features(cfg: RunConfig) -> int:
    records = read_dataset_manifest(cfg.manifest)
    base_dir = Path(cfg.manifest).parent
    _, errors = experiment.extract_all_features(records, cfg, base_dir, cfg.cache_dir)
    if errors:
        print(f"{len(errors)} file(s) failed:", file=sys.stderr)
        for line in errors:
            print(f"  {line}", file=sys.stderr)
        return 1
    log.info("feature cache up to date for %d snippets", len(records))
    return 0


def cmd_tree(cfg: RunConfig) -> int:
    records = read_dataset_manifest(cfg.manifest)
    base_dir = Path(cfg.manifest).parent
    dataset, errors = experiment.extract_all_features(records, cfg, base_dir, cfg.cache_dir)
    if errors:
        raise DataError("feature extraction failed: " + "; ".join(errors))
    categories = sorted({rec["category"] for rec in records})
    cat_to_id = {cat: i for i, cat in enumerate(categories)}
    models = experiment.build_embeddings(dataset, sorted(dataset), cat_to_id, cfg,
                                         derive_seed(cfg.seed, "tree-all"))
    out = Path(cfg.out_dir) / "lte_full"
    for c, model in enumerate(models):
        save_embedding(out / f"channel_{c}.emb", model)
    log.info("saved %d embedding models under %s", len(models), out)
    return 0


def _run_pipeline(cfg: RunConfig, mode: str):
    records = read_dataset_manifest(cfg.manifest)
    base_dir = Path(cfg.manifest).parent
    return experiment.run_experiment(records, cfg, base_dir, cfg.cache_dir,
                                     artifact_dir=cfg.out_dir, mode=mode)


def cmd_train(cfg: RunConfig) -> int:
    _run_pipeline(cfg, mode="train")
    log.info("artifacts written under %s", cfg.out_dir)
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    report, split_results, categories = _run_pipeline(cfg, mode="load")
    out = Path(cfg.out_dir)
    experiment.save_results_json(out / "results.json", split_results, categories)
    written = emit_report(report, out / "reports", plots=True)
    for path in written:
        log.info("wrote %s", path)
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    rows = run_all_checks()
    width = max(len(name) for name, _, _ in rows)
    failed = False
    for name, err, ok in rows:
        print(f"{name:<{width}}  max_error={err:.3e}  {'PASS' if ok else 'FAIL'}")
        failed |= not ok
    if failed:
        raise NumericalError("gradient check failed; see table above")
    return 0


def cmd_report(cfg: RunConfig, plots: bool) -> int:
    results_path = Path(cfg.out_dir) / "results.json"
    if not results_path.exists():
        raise DataError(f"no stored results at {results_path}; run sweep first")
    split_results, categories = experiment.load_results_json(results_path)
    report = build_report(split_results, categories)
    written = emit_report(report, Path(cfg.out_dir) / "reports", plots=plots)
    for path in written:
        log.info("wrote %s", path)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "features":
            return cmd_features(cfg)
        if args.command == "tree":
            return cmd_tree(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg)
        if args.command == "report":
            return cmd_report(cfg, args.plots)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, EarshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
