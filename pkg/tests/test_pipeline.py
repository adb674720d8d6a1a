"""Integration tests for the experiment orchestration."""

import numpy as np
import pytest

from earshot import experiment
from earshot.config import RunConfig, derive_seed, load_config
from earshot.errors import ConfigError, DataError
from earshot.evalharness import make_splits


@pytest.fixture(scope="module")
def tiny_world(tmp_path_factory):
    """Small synthesized corpus with extracted features."""
    work = tmp_path_factory.mktemp("world")
    cfg = RunConfig(synth_categories=3, synth_per_category=4, synth_duration_s=12.0,
                    q=4, hidden=8, transform_dim=8, max_epochs=2, batch_size=16,
                    lte_max_frames=2000, n_splits=1, seed=5,
                    systems=("cnn", "rnn", "lf-mult"))
    records, recipe = experiment.generate_corpus(cfg, work)
    dataset, errors = experiment.extract_all_features(records, cfg, work, work / "cache")
    assert errors == []
    return work, cfg, records, dataset


def test_generate_corpus_layout(tiny_world):
    work, cfg, records, dataset = tiny_world
    assert len(records) == 12
    cats = {r["category"] for r in records}
    assert cats == {"scene00", "scene01", "scene02"}
    for rec in records:
        assert (work / rec["path"]).exists()


def test_segment_grid_features(tiny_world):
    _, _, _, dataset = tiny_world
    entry = next(iter(dataset.values()))
    # 12 s -> 3 segments of 31 frames each
    assert entry["n_segments"] == 3
    assert entry["frames_per_segment"] == 31
    assert entry["duration_s"] == pytest.approx(12.0)
    for c, dim in zip(entry["channels"], (64, 64, 20, 20, 40, 40)):
        assert c.shape == (93, dim)


def test_snippet_tensor_shape_and_range(tiny_world):
    _, cfg, records, dataset = tiny_world
    cats = sorted({r["category"] for r in records})
    cat_to_id = {c: i for i, c in enumerate(cats)}
    ids = sorted(dataset)
    emb = experiment.build_embeddings(dataset, ids, cat_to_id, cfg, 7)
    x = experiment.snippet_tensor(dataset[ids[0]], emb)
    assert x.shape == (3, 4, 31, 6)  # S, F=2(C-1), T, D
    assert np.all(x >= 0) and np.all(x <= 1)


def test_needed_networks_resolution():
    assert experiment.needed_networks(("cnn",)) == ["cnn"]
    assert experiment.needed_networks(("lf-mult",)) == ["cnn", "rnn"]
    assert experiment.needed_networks(("ef-max", "lf-mean")) == ["ef-max", "cnn", "rnn"]
    assert experiment.needed_networks(("cnn", "rnn", "lf-max", "lf-mult")) == ["cnn", "rnn"]


def test_run_split_produces_metrics(tiny_world):
    _, cfg, records, dataset = tiny_world
    cats = sorted({r["category"] for r in records})
    cat_to_id = {c: i for i, c in enumerate(cats)}
    plan = make_splits(records, 1, 0.75, seed=3)
    train_ids, test_ids = plan.splits[0]
    result = experiment.run_split(0, train_ids, test_ids, dataset, cat_to_id, cfg)
    durations = sorted({d for (_, d) in result})
    assert durations == [4, 8, 12]
    for key, entry in result.items():
        assert 0.0 <= entry["accuracy"] <= 100.0
        assert 0.0 <= entry["f1"] <= 100.0
        assert entry["per_category_f1"].shape == (3,)


def test_no_test_snippet_in_any_training_stage(tiny_world, monkeypatch):
    """Strict protocol: embeddings, networks, and SVMs see only training
    snippets of their split."""
    _, cfg, records, dataset = tiny_world
    cats = sorted({r["category"] for r in records})
    cat_to_id = {c: i for i, c in enumerate(cats)}
    plan = make_splits(records, 1, 0.75, seed=4)
    train_ids, test_ids = plan.splits[0]
    seen_by_embeddings = []
    seen_by_training = []

    orig_build = experiment.build_embeddings
    orig_train = experiment.train_model

    def spy_build(dataset_arg, ids, *args, **kwargs):
        seen_by_embeddings.extend(ids)
        return orig_build(dataset_arg, ids, *args, **kwargs)

    def spy_train(model, x, y, tcfg):
        seen_by_training.append(x.shape[0])
        return orig_train(model, x, y, tcfg)

    monkeypatch.setattr(experiment, "build_embeddings", spy_build)
    monkeypatch.setattr(experiment, "train_model", spy_train)
    experiment.run_split(0, train_ids, test_ids, dataset, cat_to_id, cfg)

    assert set(seen_by_embeddings) == set(train_ids)
    assert not set(seen_by_embeddings) & set(test_ids)
    n_train_segments = sum(dataset[sid]["n_segments"] for sid in train_ids)
    assert all(n == n_train_segments for n in seen_by_training)


def test_run_experiment_report(tiny_world, tmp_path):
    work, cfg, records, _ = tiny_world
    report, split_results, cats = experiment.run_experiment(
        records, cfg, work, work / "cache")
    assert cats == ["scene00", "scene01", "scene02"]
    assert report.n_splits == 1
    assert set(report.systems) == {"cnn", "rnn", "lf-mult"}
    path = tmp_path / "results.json"
    experiment.save_results_json(path, split_results, cats)
    loaded, loaded_cats = experiment.load_results_json(path)
    assert loaded_cats == cats
    for key, entry in split_results[0].items():
        assert loaded[0][key]["accuracy"] == pytest.approx(entry["accuracy"])
        assert np.allclose(loaded[0][key]["per_category_f1"], entry["per_category_f1"])


def test_artifact_roundtrip_between_train_and_load(tiny_world, tmp_path):
    """mode='load' reproduces the posteriors of mode='train' from disk."""
    work, cfg, records, _ = tiny_world
    art = tmp_path / "artifacts"
    report_a, _, _ = experiment.run_experiment(records, cfg, work, work / "cache",
                                               artifact_dir=art, mode="train")
    report_b, _, _ = experiment.run_experiment(records, cfg, work, work / "cache",
                                               artifact_dir=art, mode="load")
    for key, entry in report_a.overall.items():
        assert report_b.overall[key]["accuracy"] == pytest.approx(entry["accuracy"], abs=1e-9)


def test_derive_seed_stable_and_component_keyed():
    assert derive_seed(1, "a") == derive_seed(1, "a")
    assert derive_seed(1, "a") != derive_seed(1, "b")
    assert derive_seed(1, "a") != derive_seed(2, "a")
    assert 0 <= derive_seed(123, "model:cnn") < 2**64


def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "cfg.ini"
    path.write_text(
        "[run]\nseed = 7\n\n[model]\nq = 12\nwidths = 3, 5, 7\n\n"
        "[eval]\nsystems = cnn,lf-mult\n\n[features]\nn_mfcc = 13\n"
    )
    cfg = load_config(path)
    assert cfg.seed == 7
    assert cfg.q == 12
    assert cfg.widths == (3, 5, 7)
    assert cfg.systems == ("cnn", "lf-mult")
    assert cfg.features.n_mfcc == 13


def test_load_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[model]\nquantum = 1\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(systems=("cnn", "bogus")).validate()
    with pytest.raises(ConfigError):
        RunConfig(train_ratio=1.5).validate()
    with pytest.raises(ConfigError):
        RunConfig(synth_duration_s=2.0).validate()
