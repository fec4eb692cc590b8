import json

import pandas as pd
import pytest

from classifiers import ModelKind
from conftest import separable_docs
from corpus import Label, LabeledDocument, save_corpus
from errors import ConfigError
from runner import (
    ExperimentConfig,
    load_experiment_config,
    read_results_csv,
    results_frame,
    run_grid,
    seed_override,
    stratified_subsample,
)
from textprep import prepare

SMALL_CNN = {"embedding_dim": 4, "n_filters": 4, "max_len": 12, "epochs": 2, "batch_size": 32}


def _config(corpus_path, out_dir, **overrides):
    values = {
        "corpus_path": str(corpus_path),
        "feature_counts": [20, 60],
        "classifiers": ["logreg", "dtree"],
        "out_dir": str(out_dir),
        "seed": 1,
    }
    values.update(overrides)
    return ExperimentConfig(**values)


def test_grid_shape_and_outputs(separable_csv, tmp_path):
    config = _config(separable_csv, tmp_path / "out", classifiers=["logreg", "dtree", "cnn"],
                     hyperparameters={"cnn": SMALL_CNN})
    result = run_grid(config)
    assert [(r.features, r.classifier) for r in result.rows] == [
        (20, ModelKind.LOGREG), (20, ModelKind.DTREE), (60, ModelKind.LOGREG), (60, ModelKind.DTREE),
    ]
    assert not result.failed
    assert result.cnn.classifier is ModelKind.CNN
    assert result.cnn.features == 60
    assert len(result.cnn_history.records) == 2
    out = tmp_path / "out"
    for name in ("results.csv", "results.txt", "cnn_results.csv", "cnn_history.csv"):
        assert (out / name).exists()
    table = (out / "results.txt").read_text()
    assert "Logistic regression" in table and "Deep learning" in table


def test_csv_reparses_to_the_same_rows(separable_csv, tmp_path):
    result = run_grid(_config(separable_csv, tmp_path))
    frame = read_results_csv(tmp_path / "results.csv")
    assert list(frame.columns) == ["features", "classifier", "accuracy", "precision", "recall", "f_score"]
    pd.testing.assert_frame_equal(frame, results_frame(result))


def test_results_do_not_depend_on_worker_count(separable_csv, tmp_path):
    serial = run_grid(_config(separable_csv, tmp_path / "a"), write=False)
    parallel = run_grid(_config(separable_csv, tmp_path / "b", max_workers=4), write=False)
    pd.testing.assert_frame_equal(results_frame(serial), results_frame(parallel))


def test_vectorizer_never_sees_test_documents(tmp_path):
    train = separable_docs(200, seed=1)
    test = [LabeledDocument(id=i, text=f"{d.text} zebra", label=d.label) for i, d in enumerate(separable_docs(60, seed=2))]
    save_corpus(train, tmp_path / "train.csv")
    save_corpus(test, tmp_path / "test.csv")
    config = ExperimentConfig(
        train_path=str(tmp_path / "train.csv"),
        test_path=str(tmp_path / "test.csv"),
        feature_counts=[1000],
        classifiers=["logreg"],
        out_dir=str(tmp_path / "out"),
    )
    result = run_grid(config, write=False)
    assert "zebra" not in result.tfidf_models[1000].vocabulary.terms


def test_failed_cell_does_not_stop_the_grid(separable_csv, tmp_path):
    config = _config(separable_csv, tmp_path, hyperparameters={"dtree": {"max_depth": 0}})
    result = run_grid(config)
    assert [r.classifier for r in result.failed] == [ModelKind.DTREE, ModelKind.DTREE]
    assert all("ConfigError" in r.error for r in result.failed)
    assert all(r.report is not None for r in result.rows if r.classifier is ModelKind.LOGREG)
    frame = read_results_csv(tmp_path / "results.csv")
    assert frame.loc[frame["classifier"] == "dtree", "accuracy"].isna().all()
    assert "Failed cells" in (tmp_path / "results.txt").read_text()


def test_rbf_cells_train_on_a_capped_subsample(separable_csv, tmp_path):
    config = _config(separable_csv, tmp_path, feature_counts=[60], classifiers=["svm-rbf"],
                     rbf_max_samples=100, hyperparameters={"svm-rbf": {"max_passes": 2}})
    result = run_grid(config, write=False)
    assert not result.failed


def test_stratified_subsample_keeps_every_class(separable_corpus):
    docs = prepare(separable_corpus)
    rows = stratified_subsample(docs, 100, seed=0)
    assert len(rows) <= 100
    assert list(rows) == sorted(rows)
    assert {docs[i].label for i in rows} == set(Label)
    assert len(stratified_subsample(docs, 10_000, seed=0)) == len(docs)


# --- Configuration ---

def _write_config(tmp_path, **values):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps(values))
    return path


def test_relative_paths_follow_the_config_file(tmp_path):
    path = _write_config(tmp_path, corpus_path="data/corpus.csv", feature_counts=[10, 20])
    config = load_experiment_config(path)
    assert config.corpus_path == str(tmp_path / "data" / "corpus.csv")
    assert config.classifiers == [
        ModelKind.LOGREG, ModelKind.SVM_LINEAR, ModelKind.SVM_RBF,
        ModelKind.DTREE, ModelKind.ADABOOST, ModelKind.RFOREST,
    ]


def test_seed_environment_override(tmp_path, monkeypatch):
    path = _write_config(tmp_path, corpus_path="c.csv", seed=3)
    assert load_experiment_config(path).seed == 3
    monkeypatch.setenv("EMOFORGE_SEED", "17")
    assert seed_override() == 17
    assert load_experiment_config(path).seed == 17
    monkeypatch.setenv("EMOFORGE_SEED", "seventeen")
    with pytest.raises(ConfigError):
        load_experiment_config(path)


@pytest.mark.parametrize("values", [
    {"corpus_path": "c.csv", "feature_counts": [20, 10]},
    {"corpus_path": "c.csv", "feature_counts": []},
    {"corpus_path": "c.csv", "classifiers": ["knn"]},
    {"train_path": "train.csv"},
])
def test_invalid_configs(tmp_path, values):
    with pytest.raises(ConfigError):
        load_experiment_config(_write_config(tmp_path, **values))


def test_config_must_be_json_object(tmp_path):
    path = tmp_path / "grid.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_experiment_config(path)
