"""End to end: synthesize a separable corpus, run the grid from the CLI, read the CSV back."""
import json

import cli
from runner import read_results_csv


def test_separable_corpus_is_learned_by_every_linear_and_tree_model(tmp_path):
    corpus = tmp_path / "corpus.csv"
    assert cli.main(["synth", "--out", str(corpus), "--size", "3000", "--seed", "4"]) == 0

    config = tmp_path / "grid.json"
    config.write_text(json.dumps({
        "corpus_path": "corpus.csv",
        "feature_counts": [1000],
        "classifiers": ["logreg", "svm-linear", "dtree"],
        "seed": 4,
    }))
    out = tmp_path / "out"
    assert cli.main(["grid", "--config", str(config), "--out", str(out)]) == 0

    results = read_results_csv(out / "results.csv")
    assert list(results["classifier"]) == ["logreg", "svm-linear", "dtree"]
    assert (results["features"] == 1000).all()
    assert (results["accuracy"] >= 0.99).all()
    assert (results["recall"] - results["accuracy"]).abs().max() <= 1e-12
