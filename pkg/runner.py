"""Experiment grid: TF-IDF feature counts x classifiers, plus one CNN run,
with results written as CSV and as an aligned text table."""
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

import vectorizer
from classifiers import (
    CLASSICAL_KINDS,
    TRAINERS,
    ModelKind,
    TrainedClassifier,
    build_config,
    parse_kind,
    train_classifier,
)
from corpus import load_corpus, stratified_split
from errors import ArtifactMissingError, ConfigError, EmoForgeError
from metrics import MetricsReport, evaluate, format_percent
from neural import TrainHistory
from textprep import TokenizedDocument, prepare
from vectorizer import TfidfConfig, TfidfModel

logger = logging.getLogger("EmoForge")

RESULT_COLUMNS = ["features", "classifier", "accuracy", "precision", "recall", "f_score"]
CNN_COLUMNS = ["classifier", "features", "accuracy", "precision", "recall", "f_score", "train_seconds"]

PathLike = Union[str, Path]


def seed_override() -> Optional[int]:
    """EMOFORGE_SEED, when set, replaces any configured seed."""
    raw = os.getenv("EMOFORGE_SEED")
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"EMOFORGE_SEED must be an integer, got {raw!r}")


class ExperimentConfig(BaseModel):
    corpus_path: Optional[str] = None
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    train_fraction: float = Field(default=0.7, gt=0.0, lt=1.0)
    seed: int = Field(default=0, ge=0)
    feature_counts: List[int] = Field(default_factory=lambda: [10000, 20000, 30000, 40000])
    classifiers: List[ModelKind] = Field(default_factory=lambda: list(CLASSICAL_KINDS))
    hyperparameters: Dict[ModelKind, Dict] = Field(default_factory=dict)
    cnn_max_features: Optional[int] = Field(default=None, ge=1)  # defaults to the largest feature count
    min_df: int = Field(default=1, ge=1)
    max_df: float = Field(default=1.0, gt=0.0, le=1.0)
    rbf_max_samples: Optional[int] = Field(default=5000, ge=2)
    max_workers: int = Field(default=1, ge=1)
    out_dir: str = Field(default_factory=lambda: os.getenv("EMOFORGE_OUT", "out"))

    @field_validator("feature_counts")
    @classmethod
    def check_feature_counts(cls, counts):
        if not counts:
            raise ValueError("feature_counts must not be empty")
        if any(n < 1 for n in counts):
            raise ValueError("feature_counts must be positive")
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError("feature_counts must be strictly increasing")
        return counts

    @field_validator("classifiers", mode="before")
    @classmethod
    def parse_classifiers(cls, names):
        return [parse_kind(n) for n in names]

    @model_validator(mode="after")
    def check_data_source(self):
        if self.corpus_path is None and (self.train_path is None or self.test_path is None):
            raise ValueError("set corpus_path, or both train_path and test_path")
        return self


def load_experiment_config(path: PathLike) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ArtifactMissingError(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    # Relative data paths are resolved against the config file's directory.
    for key in ("corpus_path", "train_path", "test_path"):
        if raw.get(key) and not Path(raw[key]).is_absolute():
            raw[key] = str(path.parent / raw[key])
    try:
        config = ExperimentConfig(**raw)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config {path}: {e}")
    seed = seed_override()
    if seed is not None:
        config = config.model_copy(update={"seed": seed})
    return config


@dataclass
class GridRow:
    features: int
    classifier: ModelKind
    report: Optional[MetricsReport] = None
    train_seconds: float = 0.0
    eval_seconds: float = 0.0
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def csv_record(self) -> Dict:
        record = {"features": self.features, "classifier": self.classifier.value}
        r = self.report
        record.update({
            "accuracy": r.accuracy if r else None,
            "precision": r.weighted_precision if r else None,
            "recall": r.weighted_recall if r else None,
            "f_score": r.weighted_f1 if r else None,
        })
        return record


@dataclass
class GridResult:
    rows: List[GridRow]
    cnn: Optional[GridRow] = None
    cnn_history: Optional[TrainHistory] = None
    tfidf_models: Dict[int, TfidfModel] = field(default_factory=dict)
    out_dir: Optional[Path] = None

    @property
    def failed(self) -> List[GridRow]:
        cells = self.rows + ([self.cnn] if self.cnn else [])
        return [row for row in cells if row.failed]


# --- Data ---

def _load_split(config: ExperimentConfig) -> Tuple[List[TokenizedDocument], List[TokenizedDocument]]:
    if config.corpus_path is not None:
        split = stratified_split(load_corpus(config.corpus_path), config.train_fraction, config.seed)
        train, test = split.train, split.test
    else:
        train, test = load_corpus(config.train_path), load_corpus(config.test_path)
    return prepare(train), prepare(test)


def stratified_subsample(docs: Sequence[TokenizedDocument], cap: int, seed: int) -> np.ndarray:
    """Row positions of an (approximately) class-proportional subset of at most `cap` docs."""
    if len(docs) <= cap:
        return np.arange(len(docs))
    kept = stratified_split(docs, cap / len(docs), seed).train
    position = {doc.id: i for i, doc in enumerate(docs)}
    return np.sort([position[doc.id] for doc in kept])


# --- Grid ---

@dataclass
class _FeatureBlock:
    tfidf: TfidfModel
    X_train: sp.csr_matrix
    X_test: sp.csr_matrix


def _run_cell(index: int, n_features: int, kind: ModelKind, block: Optional[_FeatureBlock], block_error: Optional[str],
              train: List[TokenizedDocument], test: List[TokenizedDocument], config: ExperimentConfig) -> GridRow:
    row = GridRow(features=n_features, classifier=kind)
    if block is None:
        row.error = block_error
        return row
    seed = config.seed + index
    try:
        model_config = build_config(kind, config.hyperparameters.get(kind), seed)
        rows = np.arange(len(train))
        if kind is ModelKind.SVM_RBF and config.rbf_max_samples is not None:
            rows = stratified_subsample(train, config.rbf_max_samples, seed)
            if len(rows) < len(train):
                logger.info(f"SVM rbf cell uses a stratified subsample of {len(rows)} training documents")
        labels = [train[i].label for i in rows]

        started = time.perf_counter()
        model = TRAINERS[kind](block.X_train[rows], labels, model_config)
        row.train_seconds = time.perf_counter() - started

        started = time.perf_counter()
        predictions = model.predict(block.X_test)
        row.report = evaluate([doc.label for doc in test], predictions)
        row.eval_seconds = time.perf_counter() - started
        logger.info(
            f"[{n_features} features] {kind.display_name}: accuracy {format_percent(row.report.accuracy)}% "
            f"({row.train_seconds:.2f}s train)"
        )
    except Exception as e:
        row.error = f"{type(e).__name__}: {e}"
        logger.error(f"[{n_features} features] {kind.display_name} failed: {row.error}")
    return row


def _run_cnn(train: List[TokenizedDocument], test: List[TokenizedDocument], config: ExperimentConfig,
             index: int) -> Tuple[GridRow, Optional[TrainHistory]]:
    n_features = config.cnn_max_features or config.feature_counts[-1]
    row = GridRow(features=n_features, classifier=ModelKind.CNN)
    try:
        tfidf = vectorizer.fit(train, TfidfConfig(min_df=config.min_df, max_df=config.max_df, max_features=n_features))
        classifier: TrainedClassifier = train_classifier(
            ModelKind.CNN, train, hyperparameters=config.hyperparameters.get(ModelKind.CNN),
            seed=config.seed + index, tfidf=tfidf,
        )
        row.train_seconds = classifier.train_seconds
        started = time.perf_counter()
        row.report = evaluate([doc.label for doc in test], classifier.predict_tokens(test))
        row.eval_seconds = time.perf_counter() - started
        logger.info(f"CNN: accuracy {format_percent(row.report.accuracy)}% ({row.train_seconds:.1f}s train)")
        return row, classifier.history
    except Exception as e:
        row.error = f"{type(e).__name__}: {e}"
        logger.error(f"CNN failed: {row.error}")
        return row, None


def run_grid(config: ExperimentConfig, write: bool = True) -> GridResult:
    """
    Trains and scores every (feature count, classifier) cell. Each feature
    count gets its own vectorizer fitted on the training split only. Cell i
    seeds its model with config.seed + i, so results do not depend on
    max_workers or execution order. A failing cell is recorded and the rest
    still run.
    """
    train, test = _load_split(config)
    logger.info(f"Grid: {len(train)} train / {len(test)} test documents")

    blocks: Dict[int, Tuple[Optional[_FeatureBlock], Optional[str]]] = {}
    tfidf_models: Dict[int, TfidfModel] = {}
    for n_features in config.feature_counts:
        try:
            tfidf = vectorizer.fit(
                train, TfidfConfig(min_df=config.min_df, max_df=config.max_df, max_features=n_features)
            )
        except EmoForgeError as e:
            logger.error(f"Vectorizer with {n_features} features failed: {e}")
            blocks[n_features] = (None, f"{type(e).__name__}: {e}")
            continue
        tfidf_models[n_features] = tfidf
        block = _FeatureBlock(
            tfidf=tfidf,
            X_train=vectorizer.transform_matrix(tfidf, train),
            X_test=vectorizer.transform_matrix(tfidf, test),
        )
        blocks[n_features] = (block, None)

    classical = [kind for kind in config.classifiers if kind is not ModelKind.CNN]
    cells = [
        (index, n_features, kind)
        for index, (n_features, kind) in enumerate(
            (n, k) for n in config.feature_counts for k in classical
        )
    ]

    def run(cell) -> GridRow:
        index, n_features, kind = cell
        block, block_error = blocks[n_features]
        return _run_cell(index, n_features, kind, block, block_error, train, test, config)

    if config.max_workers > 1:
        with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
            rows = list(pool.map(run, cells))
    else:
        rows = [run(cell) for cell in cells]

    result = GridResult(rows=rows, tfidf_models=tfidf_models)
    if ModelKind.CNN in config.classifiers:
        result.cnn, result.cnn_history = _run_cnn(train, test, config, len(cells))

    if write:
        result.out_dir = write_results(result, config.out_dir)
    if result.failed:
        logger.error(f"{len(result.failed)} grid cell(s) failed")
    return result


# --- Output ---

def results_frame(result: GridResult) -> pd.DataFrame:
    return pd.DataFrame([row.csv_record() for row in result.rows], columns=RESULT_COLUMNS)


def format_table(result: GridResult) -> str:
    """Aligned, percent-formatted tables: the TF-IDF sweep, then the CNN."""
    def line(row: GridRow) -> Dict:
        if row.report is None:
            metrics = {"Accuracy": "failed", "Precision": "", "Recall": "", "F-score": ""}
        else:
            p = row.report.as_percentages()
            metrics = {"Accuracy": p["accuracy"], "Precision": p["precision"],
                       "Recall": p["recall"], "F-score": p["f_score"]}
        return {"Classifier": row.classifier.display_name, "Features": row.features, **metrics}

    sections = []
    if result.rows:
        frame = pd.DataFrame([line(row) for row in result.rows])
        sections.append("Classical machine learning\n" + frame.to_string(index=False))
    if result.cnn is not None:
        cnn = line(result.cnn)
        cnn["Time (min)"] = f"{result.cnn.train_seconds / 60:.1f}"
        sections.append("Deep learning\n" + pd.DataFrame([cnn]).to_string(index=False))
    failures = result.failed
    if failures:
        sections.append("Failed cells\n" + "\n".join(
            f"  {r.classifier.value} @ {r.features}: {r.error}" for r in failures
        ))
    return "\n\n".join(sections) + "\n"


def write_results(result: GridResult, out_dir: PathLike) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_frame(result).to_csv(out / "results.csv", index=False)
    (out / "results.txt").write_text(format_table(result), encoding="utf-8")
    if result.cnn is not None:
        record = result.cnn.csv_record()
        record["train_seconds"] = result.cnn.train_seconds
        pd.DataFrame([record], columns=CNN_COLUMNS).to_csv(out / "cnn_results.csv", index=False)
    if result.cnn_history is not None:
        result.cnn_history.to_csv(out / "cnn_history.csv")
    logger.info(f"Wrote grid results to {out}")
    return out


def read_results_csv(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ArtifactMissingError(path)
    return pd.read_csv(path, float_precision="round_trip")
