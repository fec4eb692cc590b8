"""Trained classifiers as one unit (vectorizer + model), the registry of
model kinds, and the versioned JSON model file."""
import json
import logging
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Type, Union

import numpy as np
from pydantic import BaseModel, ValidationError

import neural
import vectorizer
from corpus import Label
from errors import (
    ArtifactMissingError,
    ConfigError,
    ModelFormatError,
    ModelParseError,
    ModelVersionError,
    ProbabilityUnavailableError,
)
from linear_models import (
    KernelSvmModel,
    LinearModel,
    LinearSvmConfig,
    LogisticConfig,
    RbfSvmConfig,
    train_linear_svm,
    train_logistic,
    train_rbf_svm,
)
from textprep import TokenizedDocument, prepare_text
from tree_models import (
    BoostConfig,
    BoostEnsemble,
    DecisionTree,
    Forest,
    ForestConfig,
    TreeConfig,
    train_adaboost,
    train_decision_tree,
    train_random_forest,
)
from vectorizer import TfidfConfig, TfidfModel

logger = logging.getLogger("EmoForge")

MODEL_FORMAT = "emoforge-model"
MODEL_VERSION = 1


class ModelKind(str, Enum):
    LOGREG = "logreg"
    SVM_LINEAR = "svm-linear"
    SVM_RBF = "svm-rbf"
    DTREE = "dtree"
    ADABOOST = "adaboost"
    RFOREST = "rforest"
    CNN = "cnn"

    @property
    def display_name(self) -> str:
        return DISPLAY_NAMES[self]


DISPLAY_NAMES: Dict[ModelKind, str] = {
    ModelKind.LOGREG: "Logistic regression",
    ModelKind.SVM_LINEAR: "SVM linear",
    ModelKind.SVM_RBF: "SVM rbf",
    ModelKind.DTREE: "Decision tree",
    ModelKind.ADABOOST: "Adaboost",
    ModelKind.RFOREST: "Random forest",
    ModelKind.CNN: "CNN",
}

# The six TF-IDF classifiers of the feature sweep.
CLASSICAL_KINDS = [k for k in ModelKind if k is not ModelKind.CNN]

CONFIG_TYPES: Dict[ModelKind, Type[BaseModel]] = {
    ModelKind.LOGREG: LogisticConfig,
    ModelKind.SVM_LINEAR: LinearSvmConfig,
    ModelKind.SVM_RBF: RbfSvmConfig,
    ModelKind.DTREE: TreeConfig,
    ModelKind.ADABOOST: BoostConfig,
    ModelKind.RFOREST: ForestConfig,
    ModelKind.CNN: neural.CnnConfig,
}

TRAINERS = {
    ModelKind.LOGREG: train_logistic,
    ModelKind.SVM_LINEAR: train_linear_svm,
    ModelKind.SVM_RBF: train_rbf_svm,
    ModelKind.DTREE: train_decision_tree,
    ModelKind.ADABOOST: train_adaboost,
    ModelKind.RFOREST: train_random_forest,
}

_MODEL_TYPES = {
    ModelKind.LOGREG: LinearModel,
    ModelKind.SVM_LINEAR: LinearModel,
    ModelKind.SVM_RBF: KernelSvmModel,
    ModelKind.DTREE: DecisionTree,
    ModelKind.ADABOOST: BoostEnsemble,
    ModelKind.RFOREST: Forest,
    ModelKind.CNN: neural.CnnModel,
}

AnyModel = Union[LinearModel, KernelSvmModel, DecisionTree, BoostEnsemble, Forest, neural.CnnModel]


def parse_kind(value: Union[str, ModelKind]) -> ModelKind:
    try:
        return ModelKind(value)
    except ValueError:
        choices = ", ".join(k.value for k in ModelKind)
        raise ConfigError(f"unknown classifier {value!r}; expected one of {choices}")


def build_config(kind: ModelKind, overrides: Optional[Dict] = None, seed: Optional[int] = None) -> BaseModel:
    """Hyperparameters for `kind` with `seed` filled in unless overridden."""
    config_type = CONFIG_TYPES[kind]
    values = dict(overrides or {})
    if seed is not None and "seed" in config_type.model_fields:
        values.setdefault("seed", seed)
    try:
        return config_type(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid {kind.value} hyperparameters: {e}")


@dataclass(eq=False)
class TrainedClassifier:
    kind: ModelKind
    tfidf: TfidfModel
    model: AnyModel
    history: Optional[neural.TrainHistory] = None
    train_seconds: float = 0.0

    def predict_tokens(self, docs: Sequence[Union[TokenizedDocument, Sequence[str]]]) -> np.ndarray:
        if self.kind is ModelKind.CNN:
            batch = vectorizer.encode_sequences(self.tfidf, docs, self.model.config.max_len)
            return neural.predict(self.model, batch)
        return self.model.predict(vectorizer.transform_matrix(self.tfidf, docs))

    def predict_proba_tokens(self, docs: Sequence[Union[TokenizedDocument, Sequence[str]]]) -> np.ndarray:
        if self.kind is ModelKind.CNN:
            batch = vectorizer.encode_sequences(self.tfidf, docs, self.model.config.max_len)
            return neural.forward(self.model, batch)
        if self.kind is ModelKind.LOGREG:
            return self.model.predict_proba(vectorizer.transform_matrix(self.tfidf, docs))
        raise ProbabilityUnavailableError(f"{self.kind.value} models do not produce probabilities")

    @property
    def has_probabilities(self) -> bool:
        return self.kind in (ModelKind.LOGREG, ModelKind.CNN)

    def predict_texts(self, texts: Sequence[str]) -> List[Label]:
        codes = self.predict_tokens([prepare_text(t) for t in texts])
        return [Label(int(c)) for c in codes]

    def describe(self) -> Dict:
        return {
            "kind": self.kind.value,
            "name": self.kind.display_name,
            "vocabulary_size": self.tfidf.n_features,
            "probabilities": self.has_probabilities,
        }


def train_classifier(kind: Union[str, ModelKind], train_docs: Sequence[TokenizedDocument],
                     tfidf_config: Optional[TfidfConfig] = None, hyperparameters: Optional[Dict] = None,
                     seed: int = 0, tfidf: Optional[TfidfModel] = None) -> TrainedClassifier:
    """
    Fits the vectorizer on `train_docs` (unless a fitted one is passed) and
    trains one model kind on top of it. The CNN reads integer sequences over
    the same vocabulary instead of TF-IDF rows.
    """
    kind = parse_kind(kind)
    config = build_config(kind, hyperparameters, seed)
    tfidf = tfidf or vectorizer.fit(train_docs, tfidf_config)
    labels = [doc.label for doc in train_docs]

    logger.info(f"Training {kind.display_name} on {len(train_docs)} documents ({tfidf.n_features} features)")
    started = time.perf_counter()
    history = None
    if kind is ModelKind.CNN:
        batch = vectorizer.encode_sequences(tfidf, train_docs, config.max_len)
        model, history = neural.train_cnn(batch, labels, config)
    else:
        X = vectorizer.transform_matrix(tfidf, train_docs)
        model = TRAINERS[kind](X, labels, config)
    elapsed = time.perf_counter() - started
    logger.info(f"Trained {kind.display_name} in {elapsed:.2f}s")
    return TrainedClassifier(kind=kind, tfidf=tfidf, model=model, history=history, train_seconds=elapsed)


# --- Persistence ---

def save_model(classifier: TrainedClassifier, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": classifier.kind.value,
        "vectorizer": classifier.tfidf.to_dict(),
        "model": classifier.model.to_dict(),
    }
    path.write_text(json.dumps(record), encoding="utf-8")
    logger.info(f"Saved {classifier.kind.value} model to {path}")
    return path


def load_model(path: Union[str, Path]) -> TrainedClassifier:
    path = Path(path)
    if not path.exists():
        raise ArtifactMissingError(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise ModelParseError(f"{path} is empty")
    try:
        record = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelParseError(f"{path} is not valid JSON (truncated?): {e}")
    if not isinstance(record, dict) or record.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path} is not an {MODEL_FORMAT} file")
    if record.get("version") != MODEL_VERSION:
        raise ModelVersionError(record.get("version"))
    try:
        kind = ModelKind(record.get("kind"))
    except ValueError:
        raise ModelFormatError(f"unknown model kind {record.get('kind')!r} in {path}")
    if "vectorizer" not in record or "model" not in record:
        raise ModelFormatError(f"{path} lacks a vectorizer or model section")

    tfidf = TfidfModel.from_dict(record["vectorizer"])
    model = _MODEL_TYPES[kind].from_dict(record["model"])
    return TrainedClassifier(kind=kind, tfidf=tfidf, model=model)
