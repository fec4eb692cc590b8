"""Exception hierarchy for EmoForge.

Every error raised on purpose by the library derives from EmoForgeError so the
CLI and the HTTP app can map them to exit codes / status codes in one place.
"""
from typing import Iterable, List, Optional


class EmoForgeError(Exception):
    """Base class for all EmoForge errors."""


# --- Corpus ---

class CorpusParseError(EmoForgeError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LabelError(EmoForgeError):
    def __init__(self, value: str, row: Optional[int] = None):
        self.value = value
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"unknown label {value!r}{where}; expected positive, negative or neutral")


class EmptyTextError(EmoForgeError):
    def __init__(self, rows: Iterable[int]):
        self.rows: List[int] = list(rows)
        super().__init__(f"empty text in rows {self.rows}")


class SplitError(EmoForgeError):
    def __init__(self, message: str, label=None):
        self.label = label
        super().__init__(message)


class SyntheticSpecError(EmoForgeError):
    pass


# --- Vectorizer ---

class FitError(EmoForgeError):
    pass


class EncodeError(EmoForgeError):
    pass


# --- Models ---

class ShapeError(EmoForgeError):
    pass


class DivergenceError(EmoForgeError):
    def __init__(self, epoch: int, learning_rate: float, loss: float = float("nan")):
        self.epoch = epoch
        self.learning_rate = learning_rate
        self.loss = loss
        super().__init__(
            f"loss became non-finite ({loss}) at epoch {epoch} with learning rate {learning_rate}"
        )


class SampleSizeError(EmoForgeError):
    def __init__(self, n_samples: int, cap: int):
        self.n_samples = n_samples
        self.cap = cap
        super().__init__(
            f"{n_samples} training samples exceeds the kernel SVM cap of {cap}; "
            f"subsample the training set (e.g. rbf_max_samples) before fitting"
        )


class BoostError(EmoForgeError):
    pass


class ProbabilityUnavailableError(EmoForgeError):
    pass


class CnnConfigError(EmoForgeError):
    pass


# --- Metrics / reports ---

class EmptyMatrixError(EmoForgeError):
    pass


class CloudError(EmoForgeError):
    pass


# --- Persistence / runner ---

class ModelVersionError(EmoForgeError):
    def __init__(self, version):
        self.version = version
        super().__init__(f"unsupported model file version {version}")


class ModelFormatError(EmoForgeError):
    pass


class ModelParseError(EmoForgeError):
    pass


class ArtifactMissingError(EmoForgeError):
    def __init__(self, path):
        self.path = str(path)
        super().__init__(f"missing file: {self.path}")


class ConfigError(EmoForgeError):
    pass
