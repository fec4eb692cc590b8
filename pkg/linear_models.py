"""Margin / likelihood classifiers over TF-IDF rows: multinomial logistic
regression, one-vs-rest linear SVM and an RBF-kernel SVM trained by
simplified SMO."""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field

from corpus import Label
from errors import (
    DivergenceError,
    FitError,
    ModelFormatError,
    ProbabilityUnavailableError,
    SampleSizeError,
    ShapeError,
)
from vectorizer import SparseVector, stack

logger = logging.getLogger("EmoForge")

N_CLASSES = len(Label)

Matrix = Union[sp.spmatrix, np.ndarray]
MatrixLike = Union[Matrix, Sequence[SparseVector]]


# --- Configuration ---

class TrainConfig(BaseModel):
    learning_rate: float = Field(default=0.1, gt=0.0)
    l2: float = Field(default=1e-4, ge=0.0)
    max_epochs: int = Field(default=500, ge=1)
    tolerance: float = Field(default=1e-6, gt=0.0)
    seed: int = Field(default=0, ge=0)
    # None means full-batch gradient descent.
    batch_size: Optional[int] = Field(default=None, ge=1)


class LogisticConfig(TrainConfig):
    pass


class LinearSvmConfig(TrainConfig):
    learning_rate: float = Field(default=0.01, gt=0.0)


class RbfSvmConfig(BaseModel):
    gamma: Optional[float] = Field(default=None, gt=0.0)  # None -> 1 / n_features
    c_reg: float = Field(default=1.0, gt=0.0)
    tolerance: float = Field(default=1e-3, gt=0.0)
    max_passes: int = Field(default=10, ge=1)
    max_iterations: int = Field(default=1000, ge=1)
    max_samples: int = Field(default=5000, ge=1)
    seed: int = Field(default=0, ge=0)


# --- Shared helpers ---

def as_matrix(X: MatrixLike, n_features: Optional[int] = None) -> Matrix:
    """Accepts a CSR/dense matrix or a list of SparseVector rows."""
    if sp.issparse(X):
        return X.tocsr()
    if isinstance(X, np.ndarray):
        return X
    vectors = list(X)
    if n_features is None:
        n_features = 1 + max((int(v.indices[-1]) for v in vectors if len(v)), default=-1)
    return stack(vectors, n_features)


def as_codes(y: Sequence) -> np.ndarray:
    return np.asarray([int(Label.parse(v)) for v in y], dtype=np.int64)


def one_hot(codes: np.ndarray, n_classes: int = N_CLASSES) -> np.ndarray:
    out = np.zeros((len(codes), n_classes), dtype=np.float64)
    out[np.arange(len(codes)), codes] = 1.0
    return out


def _check_training_set(X: Matrix, y: np.ndarray) -> None:
    if X.shape[0] != len(y) or len(y) == 0:
        raise ShapeError(f"X has {X.shape[0]} rows but y has {len(y)} labels (need equal and > 0)")
    if len(np.unique(y)) < 2:
        raise FitError("training labels contain a single class; at least 2 are required")


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


# --- Linear models ---

@dataclass(eq=False)
class LinearModel:
    weights: np.ndarray  # C x V
    bias: np.ndarray  # C
    kind: str  # "logistic" | "linear_svm"
    history: Tuple[float, ...] = field(default_factory=tuple)

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def decision_function(self, X: MatrixLike) -> np.ndarray:
        X = as_matrix(X, self.n_features)
        if X.shape[1] != self.n_features:
            raise ShapeError(f"model expects {self.n_features} features, got {X.shape[1]}")
        return np.asarray(X @ self.weights.T) + self.bias

    def predict(self, X: MatrixLike) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest class code on ties.
        return np.argmax(self.decision_function(X), axis=1)

    def predict_proba(self, X: MatrixLike) -> np.ndarray:
        if self.kind != "logistic":
            raise ProbabilityUnavailableError(f"{self.kind} models expose decision scores, not probabilities")
        return softmax(self.decision_function(X))

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "n_classes": int(self.weights.shape[0]),
            "n_features": self.n_features,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "LinearModel":
        try:
            weights = np.asarray(data["weights"], dtype=np.float64).reshape(data["n_classes"], data["n_features"])
            bias = np.asarray(data["bias"], dtype=np.float64)
            return cls(weights=weights, bias=bias, kind=data["kind"], history=tuple(data.get("history", ())))
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"malformed linear model record: {e}")


def logistic_objective(W: np.ndarray, b: np.ndarray, X: Matrix, Y: np.ndarray, l2: float):
    """
    Mean multinomial cross-entropy (deviance / 2N) plus (l2/2)||W||^2.
    Returns (loss, grad_W, grad_b).
    """
    n = X.shape[0]
    logits = np.asarray(X @ W.T) + b
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = -np.sum(Y * log_probs) / n + 0.5 * l2 * np.sum(W * W)
    residual = (np.exp(log_probs) - Y) / n
    grad_W = np.asarray(X.T @ residual).T + l2 * W
    grad_b = residual.sum(axis=0)
    return float(loss), grad_W, grad_b


def hinge_objective(W: np.ndarray, b: np.ndarray, X: Matrix, Y: np.ndarray, l2: float):
    """
    One-vs-rest hinge loss summed over the binary problems, averaged over
    samples, plus (l2/2)||W||^2. Margins of exactly 1 contribute no
    sub-gradient. Returns (loss, grad_W, grad_b).
    """
    n = X.shape[0]
    signs = 2.0 * Y - 1.0
    margins = signs * (np.asarray(X @ W.T) + b)
    loss = np.sum(np.maximum(0.0, 1.0 - margins)) / n + 0.5 * l2 * np.sum(W * W)
    residual = -(signs * (margins < 1.0)) / n
    grad_W = np.asarray(X.T @ residual).T + l2 * W
    grad_b = residual.sum(axis=0)
    return float(loss), grad_W, grad_b


def _gradient_descent(objective, X: Matrix, codes: np.ndarray, config: TrainConfig, kind: str) -> LinearModel:
    n, n_features = X.shape
    Y = one_hot(codes)
    W = np.zeros((N_CLASSES, n_features))
    b = np.zeros(N_CLASSES)
    rng = np.random.default_rng(config.seed)
    batch_size = config.batch_size if config.batch_size and config.batch_size < n else None

    previous, _, _ = objective(W, b, X, Y, config.l2)
    history = [previous]
    for epoch in range(1, config.max_epochs + 1):
        if batch_size is None:
            _, grad_W, grad_b = objective(W, b, X, Y, config.l2)
            W -= config.learning_rate * grad_W
            b -= config.learning_rate * grad_b
        else:
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                _, grad_W, grad_b = objective(W, b, X[idx], Y[idx], config.l2)
                W -= config.learning_rate * grad_W
                b -= config.learning_rate * grad_b

        loss, _, _ = objective(W, b, X, Y, config.l2)
        if not np.isfinite(loss) or not np.all(np.isfinite(W)):
            raise DivergenceError(epoch, config.learning_rate, loss)
        history.append(loss)
        if previous - loss < config.tolerance:
            logger.debug(f"{kind} converged after {epoch} epochs (objective {loss:.6f})")
            break
        previous = loss
    else:
        logger.warning(f"{kind} reached max_epochs={config.max_epochs} before the objective settled")

    return LinearModel(weights=W, bias=b, kind=kind, history=tuple(history))


def train_logistic(X: MatrixLike, y: Sequence, config: Optional[LogisticConfig] = None,
                   n_features: Optional[int] = None) -> LinearModel:
    """
    Maximum-likelihood multinomial logistic regression. Weights start at
    zero; gradient descent runs until the epoch-over-epoch objective drop
    falls below `tolerance` or `max_epochs` is reached.
    """
    config = config or LogisticConfig()
    X = as_matrix(X, n_features)
    codes = as_codes(y)
    _check_training_set(X, codes)
    return _gradient_descent(logistic_objective, X, codes, config, "logistic")


def train_linear_svm(X: MatrixLike, y: Sequence, config: Optional[LinearSvmConfig] = None,
                     n_features: Optional[int] = None) -> LinearModel:
    """
    One-vs-rest linear SVM by sub-gradient descent. The binary problems share
    no parameters, so they are stepped together as the columns of one
    objective.
    """
    config = config or LinearSvmConfig()
    X = as_matrix(X, n_features)
    codes = as_codes(y)
    _check_training_set(X, codes)
    return _gradient_descent(hinge_objective, X, codes, config, "linear_svm")


# --- Kernel SVM ---

def _squared_norms(X: Matrix) -> np.ndarray:
    if sp.issparse(X):
        return np.asarray(X.multiply(X).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", X, X)


def rbf_kernel(A: Matrix, B: Matrix, gamma: float) -> np.ndarray:
    """k(a, b) = exp(-gamma * ||a - b||^2) for every row pair."""
    cross = A @ B.T
    cross = cross.toarray() if sp.issparse(cross) else np.asarray(cross)
    distances = _squared_norms(A)[:, None] + _squared_norms(B)[None, :] - 2.0 * cross
    return np.exp(-gamma * np.maximum(distances, 0.0))


def rbf_kernel_pair(a: SparseVector, b: SparseVector, gamma: float) -> float:
    diff = {}
    for i, w in zip(a.indices.tolist(), a.weights.tolist()):
        diff[i] = w
    for i, w in zip(b.indices.tolist(), b.weights.tolist()):
        diff[i] = diff.get(i, 0.0) - w
    return float(np.exp(-gamma * sum(d * d for d in diff.values())))


@dataclass(eq=False)
class KernelSvmModel:
    support_vectors: sp.csr_matrix
    dual_coefficients: np.ndarray  # C x n_sv, entries alpha_i * t_i per one-vs-rest problem
    biases: np.ndarray  # C
    gamma: float
    c_reg: float

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, X: MatrixLike) -> np.ndarray:
        X = as_matrix(X, self.n_features)
        if X.shape[1] != self.n_features:
            raise ShapeError(f"model expects {self.n_features} features, got {X.shape[1]}")
        if self.support_vectors.shape[0] == 0:
            return np.tile(self.biases, (X.shape[0], 1))
        K = rbf_kernel(X, self.support_vectors, self.gamma)
        return K @ self.dual_coefficients.T + self.biases

    def predict(self, X: MatrixLike) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def predict_proba(self, X: MatrixLike) -> np.ndarray:
        raise ProbabilityUnavailableError("RBF SVM models expose decision scores, not probabilities")

    def to_dict(self) -> Dict:
        sv = self.support_vectors
        return {
            "kind": "rbf_svm",
            "n_features": self.n_features,
            "gamma": self.gamma,
            "c_reg": self.c_reg,
            "support_vectors": [
                {
                    "indices": sv.indices[sv.indptr[i]:sv.indptr[i + 1]].tolist(),
                    "weights": sv.data[sv.indptr[i]:sv.indptr[i + 1]].tolist(),
                }
                for i in range(sv.shape[0])
            ],
            "dual_coefficients": self.dual_coefficients.tolist(),
            "biases": self.biases.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "KernelSvmModel":
        try:
            vectors = [
                SparseVector(
                    indices=np.asarray(r["indices"], dtype=np.int64),
                    weights=np.asarray(r["weights"], dtype=np.float64),
                )
                for r in data["support_vectors"]
            ]
            coefficients = np.asarray(data["dual_coefficients"], dtype=np.float64).reshape(N_CLASSES, len(vectors))
            return cls(
                support_vectors=stack(vectors, int(data["n_features"])),
                dual_coefficients=coefficients,
                biases=np.asarray(data["biases"], dtype=np.float64),
                gamma=float(data["gamma"]),
                c_reg=float(data["c_reg"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"malformed kernel SVM record: {e}")


def _smo(K: np.ndarray, t: np.ndarray, config: RbfSvmConfig, c_reg: float, rng: np.random.Generator):
    """Simplified SMO for one binary problem with targets t in {-1, +1}."""
    n = len(t)
    alpha = np.zeros(n)
    b = 0.0
    tol = config.tolerance
    passes = 0
    iterations = 0
    while passes < config.max_passes and iterations < config.max_iterations:
        changed = 0
        for i in range(n):
            E_i = float((alpha * t) @ K[:, i]) + b - t[i]
            if not ((t[i] * E_i < -tol and alpha[i] < c_reg) or (t[i] * E_i > tol and alpha[i] > 0)):
                continue
            j = int(rng.integers(n - 1))
            if j >= i:
                j += 1
            E_j = float((alpha * t) @ K[:, j]) + b - t[j]
            a_i, a_j = alpha[i], alpha[j]
            if t[i] != t[j]:
                low, high = max(0.0, a_j - a_i), min(c_reg, c_reg + a_j - a_i)
            else:
                low, high = max(0.0, a_i + a_j - c_reg), min(c_reg, a_i + a_j)
            if low >= high:
                continue
            eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
            if eta >= 0:
                continue
            new_j = float(np.clip(a_j - t[j] * (E_i - E_j) / eta, low, high))
            if abs(new_j - a_j) < 1e-8:
                continue
            new_i = float(np.clip(a_i + t[i] * t[j] * (a_j - new_j), 0.0, c_reg))
            b1 = b - E_i - t[i] * (new_i - a_i) * K[i, i] - t[j] * (new_j - a_j) * K[i, j]
            b2 = b - E_j - t[i] * (new_i - a_i) * K[i, j] - t[j] * (new_j - a_j) * K[j, j]
            if 0 < new_i < c_reg:
                b = b1
            elif 0 < new_j < c_reg:
                b = b2
            else:
                b = (b1 + b2) / 2.0
            alpha[i], alpha[j] = new_i, new_j
            changed += 1
        iterations += 1
        passes = passes + 1 if changed == 0 else 0
    return alpha, b


def train_rbf_svm(X: MatrixLike, y: Sequence, config: Optional[RbfSvmConfig] = None,
                  n_features: Optional[int] = None) -> KernelSvmModel:
    """
    One-vs-rest RBF SVMs, each solved by simplified SMO on a precomputed
    Gram matrix. Quadratic in the sample count, hence the `max_samples` cap.
    """
    config = config or RbfSvmConfig()
    X = as_matrix(X, n_features)
    codes = as_codes(y)
    _check_training_set(X, codes)
    n = X.shape[0]
    if n > config.max_samples:
        raise SampleSizeError(n, config.max_samples)

    gamma = config.gamma if config.gamma is not None else 1.0 / max(X.shape[1], 1)
    K = rbf_kernel(X, X, gamma)
    K = (K + K.T) / 2.0
    np.fill_diagonal(K, 1.0)

    rng = np.random.default_rng(config.seed)
    coefficients = np.zeros((N_CLASSES, n))
    biases = np.zeros(N_CLASSES)
    for label in Label:
        t = np.where(codes == int(label), 1.0, -1.0)
        if not np.any(t > 0):
            # No positive examples: a constant "rest" score.
            biases[int(label)] = -1.0
            continue
        alpha, b = _smo(K, t, config, config.c_reg, rng)
        coefficients[int(label)] = alpha * t
        biases[int(label)] = b

    support = np.flatnonzero(np.any(coefficients != 0.0, axis=0))
    X_csr = X.tocsr() if sp.issparse(X) else sp.csr_matrix(X)
    logger.info(f"RBF SVM trained on {n} samples: {len(support)} support vectors (gamma={gamma:.4g})")
    return KernelSvmModel(
        support_vectors=X_csr[support],
        dual_coefficients=coefficients[:, support],
        biases=biases,
        gamma=gamma,
        c_reg=config.c_reg,
    )
