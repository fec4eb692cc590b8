"""Single-layer 1-D CNN over token-code sequences, written against numpy.

embedding lookup -> valid 1-D convolution (kernel k x d) -> ReLU ->
global max pool over positions -> dense -> softmax, trained by mini-batch
SGD on mean categorical cross-entropy.
"""
import copy
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, Field, model_validator

from errors import CnnConfigError, DivergenceError, EncodeError, ModelFormatError, ShapeError
from gradcheck import central_difference, relative_error
from linear_models import N_CLASSES, as_codes, one_hot
from vectorizer import FIRST_TERM_CODE, PAD_CODE, SequenceBatch

logger = logging.getLogger("EmoForge")

INIT_SCALE = 0.05


class CnnConfig(BaseModel):
    embedding_dim: int = Field(default=32, ge=1)
    n_filters: int = Field(default=64, ge=1)
    kernel_width: int = Field(default=3, ge=1)
    max_len: int = Field(default=40, ge=1)
    learning_rate: float = Field(default=0.1, ge=0.0)
    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=10, ge=1)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_kernel_fits(self):
        if self.kernel_width > self.max_len:
            raise CnnConfigError(
                f"kernel_width={self.kernel_width} is larger than max_len={self.max_len}"
            )
        return self


@dataclass(eq=False)
class CnnModel:
    embedding: np.ndarray  # (V + 2) x d, row 0 is the pad row
    conv_weights: np.ndarray  # F x k x d
    conv_bias: np.ndarray  # F
    dense_weights: np.ndarray  # 3 x F
    dense_bias: np.ndarray  # 3
    config: CnnConfig

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0] - FIRST_TERM_CODE

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def parameters(self) -> Dict[str, np.ndarray]:
        return {
            "embedding": self.embedding,
            "conv_weights": self.conv_weights,
            "conv_bias": self.conv_bias,
            "dense_weights": self.dense_weights,
            "dense_bias": self.dense_bias,
        }

    def copy(self) -> "CnnModel":
        return copy.deepcopy(self)

    def to_dict(self) -> Dict:
        return {
            "vocab_size": self.vocab_size,
            "config": self.config.model_dump(),
            "parameters": {
                name: {"shape": list(p.shape), "values": p.ravel().tolist()}
                for name, p in self.parameters().items()
            },
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "CnnModel":
        try:
            arrays = {
                name: np.asarray(rec["values"], dtype=np.float64).reshape(rec["shape"])
                for name, rec in data["parameters"].items()
            }
            return cls(config=CnnConfig(**data["config"]), **arrays)
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"malformed CNN record: {e}")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float
    validation_accuracy: Optional[float]
    seconds: float


@dataclass
class TrainHistory:
    initial_loss: float
    records: List[EpochRecord] = field(default_factory=list)

    @property
    def seconds(self) -> float:
        return sum(r.seconds for r in self.records)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [vars(r) for r in self.records],
            columns=["epoch", "loss", "accuracy", "validation_accuracy", "seconds"],
        )

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path


def init_cnn(vocab_size: int, config: Optional[CnnConfig] = None) -> CnnModel:
    """
    Embedding and dense weights uniform in [-0.05, 0.05]; conv kernels
    standard normal scaled by 1/sqrt(k*d); biases zero; pad row zero.
    """
    config = config or CnnConfig()
    if vocab_size < 0:
        raise CnnConfigError(f"vocab_size must be >= 0, got {vocab_size}")
    d, F, k = config.embedding_dim, config.n_filters, config.kernel_width
    rng = np.random.default_rng(config.seed)
    embedding = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(vocab_size + FIRST_TERM_CODE, d))
    embedding[PAD_CODE] = 0.0
    conv_weights = rng.standard_normal((F, k, d)) / math.sqrt(k * d)
    dense_weights = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(N_CLASSES, F))
    return CnnModel(
        embedding=embedding,
        conv_weights=conv_weights,
        conv_bias=np.zeros(F),
        dense_weights=dense_weights,
        dense_bias=np.zeros(N_CLASSES),
        config=config,
    )


# --- Forward / backward ---

@dataclass
class _Cache:
    codes: np.ndarray
    windows: np.ndarray  # N x P x d x k
    pre: np.ndarray  # N x P x F
    active: np.ndarray  # rectifier mask, N x P x F
    argmax: np.ndarray  # pooled position per (sample, filter), N x F
    pooled: np.ndarray  # N x F
    log_probs: np.ndarray  # N x 3


def _check_codes(model: CnnModel, codes: np.ndarray) -> None:
    if codes.ndim != 2:
        raise ShapeError(f"expected a 2-D code matrix, got shape {codes.shape}")
    if codes.shape[1] < model.config.kernel_width:
        raise CnnConfigError(
            f"sequence length {codes.shape[1]} is shorter than kernel_width={model.config.kernel_width}"
        )
    if codes.size and (codes.min() < 0 or codes.max() >= model.embedding.shape[0]):
        raise EncodeError(
            f"token codes must lie in [0, {model.embedding.shape[0] - 1}], "
            f"got range [{codes.min()}, {codes.max()}]"
        )


def _forward(model: CnnModel, codes: np.ndarray,
             routing: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> _Cache:
    """`routing` pins the rectifier mask and pooled positions (gradient checks)."""
    embedded = model.embedding[codes]
    windows = sliding_window_view(embedded, model.config.kernel_width, axis=1)
    pre = np.einsum("npdk,fkd->npf", windows, model.conv_weights) + model.conv_bias
    if routing is None:
        active = pre > 0
        argmax = np.argmax(np.where(active, pre, 0.0), axis=1)
    else:
        argmax, active = routing
    rectified = np.where(active, pre, 0.0)
    pooled = np.take_along_axis(rectified, argmax[:, None, :], axis=1)[:, 0, :]
    logits = pooled @ model.dense_weights.T + model.dense_bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return _Cache(codes, windows, pre, active, argmax, pooled, log_probs)


def _loss(cache: _Cache, targets: np.ndarray) -> float:
    return float(-np.sum(targets * cache.log_probs) / targets.shape[0])


def _backward(model: CnnModel, cache: _Cache, targets: np.ndarray) -> Dict[str, np.ndarray]:
    n = targets.shape[0]
    k = model.config.kernel_width
    d_logits = (np.exp(cache.log_probs) - targets) / n

    grads = {
        "dense_weights": d_logits.T @ cache.pooled,
        "dense_bias": d_logits.sum(axis=0),
    }
    d_pooled = d_logits @ model.dense_weights
    # Max pooling routes each filter's gradient to its (first) maximal position.
    d_pre = np.zeros_like(cache.pre)
    np.put_along_axis(d_pre, cache.argmax[:, None, :], d_pooled[:, None, :], axis=1)
    d_pre *= cache.active
    grads["conv_bias"] = d_pre.sum(axis=(0, 1))
    grads["conv_weights"] = np.einsum("npf,npdk->fkd", d_pre, cache.windows)

    d_windows = np.einsum("npf,fkd->npdk", d_pre, model.conv_weights)
    positions = d_windows.shape[1]
    d_embedded = np.zeros((n, cache.codes.shape[1], model.embedding.shape[1]))
    for offset in range(k):
        d_embedded[:, offset:offset + positions, :] += d_windows[:, :, :, offset]
    d_embedding = np.zeros_like(model.embedding)
    np.add.at(d_embedding, cache.codes, d_embedded)
    d_embedding[PAD_CODE] = 0.0
    grads["embedding"] = d_embedding
    return grads


def _codes_of(batch: Union[SequenceBatch, np.ndarray]) -> np.ndarray:
    return batch.codes if isinstance(batch, SequenceBatch) else np.asarray(batch, dtype=np.int64)


def forward(model: CnnModel, batch: Union[SequenceBatch, np.ndarray]) -> np.ndarray:
    """Class probabilities, one row per sequence."""
    codes = _codes_of(batch)
    _check_codes(model, codes)
    return np.exp(_forward(model, codes).log_probs)


def predict(model: CnnModel, batch: Union[SequenceBatch, np.ndarray]) -> np.ndarray:
    return np.argmax(forward(model, batch), axis=1)


def loss_and_accuracy(model: CnnModel, batch: Union[SequenceBatch, np.ndarray], labels: Sequence) -> Tuple[float, float]:
    codes = _codes_of(batch)
    _check_codes(model, codes)
    y = as_codes(labels)
    cache = _forward(model, codes)
    accuracy = float(np.mean(np.argmax(cache.log_probs, axis=1) == y))
    return _loss(cache, one_hot(y)), accuracy


def train_step(model: CnnModel, codes: np.ndarray, targets: np.ndarray, learning_rate: float) -> float:
    """One SGD update in place on `model`; returns the pre-update batch loss."""
    cache = _forward(model, codes)
    grads = _backward(model, cache, targets)
    for name, param in model.parameters().items():
        param -= learning_rate * grads[name]
    return _loss(cache, targets)


def train_cnn(train: SequenceBatch, labels: Sequence, config: Optional[CnnConfig] = None,
              validation: Optional[Tuple[SequenceBatch, Sequence]] = None) -> Tuple[CnnModel, TrainHistory]:
    config = config or CnnConfig()
    codes = train.codes
    y = as_codes(labels)
    if len(y) == 0 or codes.shape[0] != len(y):
        raise ShapeError(f"{codes.shape[0]} sequences but {len(y)} labels (need equal and > 0)")
    if codes.shape[1] != config.max_len:
        raise ShapeError(f"sequences have length {codes.shape[1]}, config max_len is {config.max_len}")

    model = init_cnn(train.vocab_size, config)
    _check_codes(model, codes)
    targets = one_hot(y)
    rng = np.random.default_rng([config.seed, 1])

    initial_loss, _ = loss_and_accuracy(model, codes, y)
    history = TrainHistory(initial_loss=initial_loss)
    logger.info(f"Training CNN on {len(y)} sequences: {model.parameter_count} parameters, {config.epochs} epochs")
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(len(y))
        for start in range(0, len(y), config.batch_size):
            idx = order[start:start + config.batch_size]
            train_step(model, codes[idx], targets[idx], config.learning_rate)

        loss, accuracy = loss_and_accuracy(model, codes, y)
        if not np.isfinite(loss):
            raise DivergenceError(epoch, config.learning_rate, loss)
        validation_accuracy = None
        if validation is not None:
            _, validation_accuracy = loss_and_accuracy(model, *validation)
        history.records.append(EpochRecord(
            epoch=epoch,
            loss=loss,
            accuracy=accuracy,
            validation_accuracy=validation_accuracy,
            seconds=time.perf_counter() - started,
        ))
        logger.info(f"CNN epoch {epoch}/{config.epochs}: loss {loss:.4f}, train accuracy {accuracy:.4f}")
    return model, history


def gradient_check(model: CnnModel, batch: Union[SequenceBatch, np.ndarray], labels: Sequence,
                   step: float = 1e-4, floor: float = 1e-6) -> float:
    """
    Worst relative error between the backpropagated gradient and central
    finite differences over every parameter group. The rectifier mask and the
    pooled positions are frozen at the unperturbed point so both sides
    differentiate the same piece of the piecewise-linear network. The pad row
    is excluded from the comparison.
    """
    codes = _codes_of(batch)
    _check_codes(model, codes)
    targets = one_hot(as_codes(labels))
    scratch = model.copy()
    cache = _forward(scratch, codes)
    # Frozen ReLU mask and max-pool argmax in place of nudging pre-activations off zero.
    routing = (cache.argmax, cache.active)
    analytic = _backward(scratch, cache, targets)

    worst = 0.0
    for name, param in scratch.parameters().items():
        numeric = central_difference(lambda: _loss(_forward(scratch, codes, routing), targets), param, step)
        if name == "embedding":
            error = relative_error(analytic[name][PAD_CODE + 1:], numeric[PAD_CODE + 1:], floor)
        else:
            error = relative_error(analytic[name], numeric, floor)
        logger.debug(f"gradient check {name}: relative error {error:.3e}")
        worst = max(worst, error)
    return worst
