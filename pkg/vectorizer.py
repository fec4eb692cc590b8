"""TF-IDF vectorizer with min-df / max-df filtering and a max-features cap,
plus integer sequence encoding for the embedding path.

Weights follow W = TF(t, d) * IDF(t) with raw in-document counts and
IDF(t) = ln(D / DF(t)); no smoothing and no row normalization.
"""
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field

from errors import EncodeError, FitError, ModelFormatError, ModelVersionError, ShapeError
from textprep import TokenizedDocument

logger = logging.getLogger("EmoForge")

FORMAT_VERSION = 1
PAD_CODE = 0
OOV_CODE = 1
FIRST_TERM_CODE = 2

TokensLike = Union[TokenizedDocument, Sequence[str]]


class TfidfConfig(BaseModel):
    min_df: int = Field(default=1, ge=1)
    max_df: float = Field(default=1.0, gt=0.0, le=1.0)
    max_features: int = Field(default=10000, ge=1)


@dataclass(frozen=True)
class Vocabulary:
    term_to_index: Dict[str, int]
    df: Tuple[int, ...]
    n_documents: int

    @property
    def size(self) -> int:
        return len(self.df)

    @property
    def terms(self) -> List[str]:
        terms = [""] * self.size
        for term, idx in self.term_to_index.items():
            terms[idx] = term
        return terms


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Sorted, unique feature indices with their weights."""
    indices: np.ndarray
    weights: np.ndarray

    @property
    def entries(self) -> List[Tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.weights.tolist()))

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class TfidfModel:
    vocabulary: Vocabulary
    idf: np.ndarray
    config: TfidfConfig

    @property
    def n_features(self) -> int:
        return self.vocabulary.size

    def to_dict(self) -> Dict:
        terms = self.vocabulary.terms
        return {
            "version": FORMAT_VERSION,
            "D": self.vocabulary.n_documents,
            "min_df": self.config.min_df,
            "max_df": self.config.max_df,
            "max_features": self.config.max_features,
            "terms": [{"t": t, "df": self.vocabulary.df[i], "idx": i} for i, t in enumerate(terms)],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "TfidfModel":
        if not isinstance(data, dict):
            raise ModelFormatError("vectorizer record must be a JSON object")
        version = data.get("version")
        if version != FORMAT_VERSION:
            raise ModelVersionError(version)
        try:
            config = TfidfConfig(
                min_df=data["min_df"], max_df=data["max_df"], max_features=data["max_features"]
            )
            entries = sorted(data["terms"], key=lambda e: e["idx"])
            term_to_index = {e["t"]: int(e["idx"]) for e in entries}
            df = tuple(int(e["df"]) for e in entries)
            n_documents = int(data["D"])
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"malformed vectorizer record: {e}")
        if sorted(term_to_index.values()) != list(range(len(df))):
            raise ModelFormatError("vectorizer term indices are not contiguous")
        vocabulary = Vocabulary(term_to_index=term_to_index, df=df, n_documents=n_documents)
        return cls(vocabulary=vocabulary, idf=_idf(n_documents, df), config=config)


@dataclass(frozen=True, eq=False)
class SequenceBatch:
    """Rows of term codes: 0 = pad, 1 = out-of-vocabulary, 2.. = vocabulary index + 2."""
    codes: np.ndarray
    vocab_size: int

    @property
    def max_len(self) -> int:
        return self.codes.shape[1]

    def __len__(self) -> int:
        return self.codes.shape[0]


def _idf(n_documents: int, df: Sequence[int]) -> np.ndarray:
    return np.log(n_documents / np.asarray(df, dtype=np.float64))


def _tokens(doc: TokensLike) -> Sequence[str]:
    return doc.tokens if isinstance(doc, TokenizedDocument) else doc


def fit(train_docs: Sequence[TokensLike], config: TfidfConfig = None) -> TfidfModel:
    """
    Learns document frequencies over the training documents, drops terms
    outside [min_df, max_df], then keeps the max_features terms with the
    highest df (ties in lexicographic order). Index order is the same ranking.
    """
    config = config or TfidfConfig()
    if not train_docs:
        raise FitError("cannot fit a vectorizer on zero documents")

    n_documents = len(train_docs)
    df = Counter()
    for doc in train_docs:
        df.update(set(_tokens(doc)))

    kept = [
        (term, n) for term, n in df.items()
        if n >= config.min_df and n / n_documents <= config.max_df
    ]
    if not kept:
        raise FitError(
            f"no term survives filtering with min_df={config.min_df}, "
            f"max_df={config.max_df} over {n_documents} documents"
        )
    kept.sort(key=lambda item: (-item[1], item[0]))
    kept = kept[: config.max_features]

    vocabulary = Vocabulary(
        term_to_index={term: i for i, (term, _) in enumerate(kept)},
        df=tuple(n for _, n in kept),
        n_documents=n_documents,
    )
    logger.info(f"Fitted TF-IDF vocabulary: {vocabulary.size} terms from {n_documents} documents")
    return TfidfModel(vocabulary=vocabulary, idf=_idf(n_documents, vocabulary.df), config=config)


def _term_counts(model: TfidfModel, doc: TokensLike) -> Tuple[np.ndarray, np.ndarray]:
    lookup = model.vocabulary.term_to_index
    counts = Counter(lookup[t] for t in _tokens(doc) if t in lookup)
    indices = np.array(sorted(counts), dtype=np.int64)
    tf = np.array([counts[i] for i in indices], dtype=np.float64)
    return indices, tf


def transform(model: TfidfModel, doc: TokensLike) -> SparseVector:
    indices, tf = _term_counts(model, doc)
    return SparseVector(indices=indices, weights=tf * model.idf[indices])


def transform_matrix(model: TfidfModel, docs: Sequence[TokensLike]) -> sp.csr_matrix:
    """Stacks transform() rows into an N x V CSR matrix."""
    indptr = [0]
    indices: List[np.ndarray] = []
    data: List[np.ndarray] = []
    for doc in docs:
        vector = transform(model, doc)
        indices.append(vector.indices)
        data.append(vector.weights)
        indptr.append(indptr[-1] + len(vector))
    matrix = sp.csr_matrix(
        (
            np.concatenate(data) if data else np.zeros(0),
            np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64),
            np.asarray(indptr, dtype=np.int64),
        ),
        shape=(len(docs), model.n_features),
        dtype=np.float64,
    )
    return matrix


def stack(vectors: Sequence[SparseVector], n_features: int) -> sp.csr_matrix:
    for row, v in enumerate(vectors):
        if len(v) and int(v.indices.max()) >= n_features:
            raise ShapeError(f"row {row} has feature index {int(v.indices.max())}, model has {n_features} features")
    indptr = np.cumsum([0] + [len(v) for v in vectors])
    indices = np.concatenate([v.indices for v in vectors]) if vectors else np.zeros(0, dtype=np.int64)
    data = np.concatenate([v.weights for v in vectors]) if vectors else np.zeros(0)
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), n_features), dtype=np.float64)


def encode_sequences(model: TfidfModel, docs: Sequence[TokensLike], max_len: int) -> SequenceBatch:
    if max_len < 1:
        raise EncodeError(f"max_len must be >= 1, got {max_len}")
    lookup = model.vocabulary.term_to_index
    codes = np.full((len(docs), max_len), PAD_CODE, dtype=np.int64)
    for row, doc in enumerate(docs):
        for col, token in enumerate(_tokens(doc)[:max_len]):
            idx = lookup.get(token)
            codes[row, col] = OOV_CODE if idx is None else idx + FIRST_TERM_CODE
    return SequenceBatch(codes=codes, vocab_size=model.n_features)
