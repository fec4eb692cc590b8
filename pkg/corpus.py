"""Labeled document collections: ingestion, stratified splitting, class
distributions and the synthetic corpus factory used for desk-scale runs."""
import csv
import json
import logging
import math
import re
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator

from errors import (
    ArtifactMissingError,
    CorpusParseError,
    EmptyTextError,
    LabelError,
    SplitError,
    SyntheticSpecError,
)

logger = logging.getLogger("EmoForge")

PathLike = Union[str, Path]


class Label(IntEnum):
    POSITIVE = 0
    NEGATIVE = 1
    NEUTRAL = 2

    @property
    def text(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value, row: Optional[int] = None) -> "Label":
        """Case-insensitive lookup by name; integer codes are accepted too."""
        if isinstance(value, Label):
            return value
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            try:
                return cls(int(value))
            except ValueError:
                raise LabelError(str(value), row)
        key = str(value).strip().upper()
        if key not in cls.__members__:
            raise LabelError(str(value), row)
        return cls[key]


@dataclass(frozen=True)
class LabeledDocument:
    id: int
    text: str
    label: Label


@dataclass(frozen=True)
class ClassDistribution:
    counts: Dict[Label, int]
    total: int

    def __add__(self, other: "ClassDistribution") -> "ClassDistribution":
        counts = {label: self.counts[label] + other.counts[label] for label in Label}
        return ClassDistribution(counts=counts, total=self.total + other.total)

    def to_dict(self) -> Dict:
        return {
            "counts": {label.text: self.counts[label] for label in Label},
            "total": self.total,
        }


@dataclass(frozen=True)
class DatasetSplit:
    train: List[LabeledDocument]
    test: List[LabeledDocument]
    seed: int
    train_fraction: float


# --- Ingestion ---

_LINE_RE = re.compile(r"line (\d+)")


def _infer_format(path: Path) -> str:
    return "tsv" if path.suffix.lower() in (".tsv", ".tab") else "csv"


def load_corpus(path: PathLike, format: Optional[str] = None) -> List[LabeledDocument]:
    """
    Reads a CSV (RFC 4180 quoting) or TSV (no quoting, no embedded tabs) file
    with a header naming a `text` and a `label` column, in any order.
    Documents get sequential ids in file order.
    """
    path = Path(path)
    if not path.exists():
        raise ArtifactMissingError(path)
    fmt = (format or _infer_format(path)).lower()
    if fmt not in ("csv", "tsv"):
        raise CorpusParseError(f"unsupported corpus format {fmt!r}")

    read_kwargs = dict(dtype=str, keep_default_na=False, encoding="utf-8")
    if fmt == "tsv":
        read_kwargs.update(sep="\t", quoting=csv.QUOTE_NONE)
    try:
        frame = pd.read_csv(path, **read_kwargs)
    except pd.errors.EmptyDataError:
        raise CorpusParseError(f"{path} is empty; expected a header row text,label", line=1)
    except pd.errors.ParserError as e:
        match = _LINE_RE.search(str(e))
        line = int(match.group(1)) if match else None
        raise CorpusParseError(f"wrong column count in {path}: {e}".strip(), line=line)

    frame.columns = [str(c).strip().lower() for c in frame.columns]
    missing = [c for c in ("text", "label") if c not in frame.columns]
    if missing:
        raise CorpusParseError(f"header is missing column(s) {missing}", line=1)

    # Short rows come back with NaN in the trailing columns.
    short = frame.isna().any(axis=1).to_numpy()
    if short.any():
        row = int(np.flatnonzero(short)[0])
        raise CorpusParseError(f"wrong column count in {path}", line=row + 2)

    docs: List[LabeledDocument] = []
    empty_rows: List[int] = []
    for row, (text, raw_label) in enumerate(zip(frame["text"], frame["label"])):
        label = Label.parse(raw_label, row=row)
        if not text.strip():
            empty_rows.append(row)
            continue
        docs.append(LabeledDocument(id=row, text=text, label=label))
    if empty_rows:
        raise EmptyTextError(empty_rows)

    logger.info(f"Loaded {len(docs)} documents from {path}")
    return docs


def save_corpus(docs: Sequence[LabeledDocument], path: PathLike, format: Optional[str] = None) -> Path:
    path = Path(path)
    fmt = (format or _infer_format(path)).lower()
    frame = pd.DataFrame(
        {"text": [d.text for d in docs], "label": [d.label.text for d in docs]},
        columns=["text", "label"],
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "tsv":
        if any("\t" in d.text for d in docs):
            raise CorpusParseError("TSV output cannot hold texts containing tab characters")
        frame.to_csv(path, sep="\t", index=False, quoting=csv.QUOTE_NONE)
    else:
        frame.to_csv(path, index=False)
    return path


# --- Distribution & splitting ---

def class_distribution(docs: Iterable[LabeledDocument]) -> ClassDistribution:
    counts = {label: 0 for label in Label}
    for doc in docs:
        counts[doc.label] += 1
    return ClassDistribution(counts=counts, total=sum(counts.values()))


def summary_json(docs: Iterable[LabeledDocument]) -> str:
    return json.dumps(class_distribution(docs).to_dict())


def allocate_largest_remainder(quotas: Sequence[Fraction], total: int) -> List[int]:
    """
    Floors every quota, then hands the missing units to the entries with the
    largest fractional remainders (ties to the lower index) until the sum is
    `total`.
    """
    floors = [math.floor(q) for q in quotas]
    extra = total - sum(floors)
    if extra < 0 or extra > len(quotas):
        raise ValueError(f"cannot allocate {total} units over quotas {quotas}")
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - floors[i]), i))
    for i in order[:extra]:
        floors[i] += 1
    return floors


def proportional_counts(total: int, reference: Mapping[Label, int]) -> Dict[Label, int]:
    """Scales a reference class mix to `total` documents."""
    ref_total = sum(reference.values())
    labels = [label for label in Label if reference.get(label, 0) > 0]
    quotas = [Fraction(total * reference[label], ref_total) for label in labels]
    allocated = allocate_largest_remainder(quotas, total)
    counts = {label: 0 for label in Label}
    counts.update(dict(zip(labels, allocated)))
    return counts


def stratified_split(docs: Sequence[LabeledDocument], train_fraction: float = 0.7, seed: int = 0) -> DatasetSplit:
    """
    Per-class largest-remainder split: class c gets floor(f * n_c) training
    documents, and the classes with the largest fractional remainders get one
    more each until the train size is floor(f * N). Which documents go to
    train is decided by a seeded shuffle of each class sorted by id, so the
    result does not depend on input order.
    """
    if not 0 < train_fraction < 1:
        raise SplitError(f"train_fraction must lie in (0, 1), got {train_fraction}")

    by_label: Dict[Label, List[LabeledDocument]] = {label: [] for label in Label}
    for doc in docs:
        by_label[doc.label].append(doc)
    present = [label for label in Label if by_label[label]]
    for label in present:
        if len(by_label[label]) < 2:
            raise SplitError(
                f"class {label.text} has {len(by_label[label])} document(s); at least 2 are needed",
                label=label,
            )

    frac = Fraction(train_fraction).limit_denominator(1_000_000)
    quotas = [frac * len(by_label[label]) for label in present]
    target = math.floor(frac * len(docs))
    train_counts = allocate_largest_remainder(quotas, target)

    rng = np.random.default_rng(seed)
    train: List[LabeledDocument] = []
    test: List[LabeledDocument] = []
    for label, n_train in zip(present, train_counts):
        members = sorted(by_label[label], key=lambda d: d.id)
        order = rng.permutation(len(members))
        train.extend(members[i] for i in order[:n_train])
        test.extend(members[i] for i in order[n_train:])

    train.sort(key=lambda d: d.id)
    test.sort(key=lambda d: d.id)
    logger.info(f"Split {len(docs)} documents into {len(train)} train / {len(test)} test (seed={seed})")
    return DatasetSplit(train=train, test=test, seed=seed, train_fraction=train_fraction)


# --- Synthetic corpora ---

DEFAULT_BANKS: Dict[Label, List[str]] = {
    Label.POSITIVE: [
        "happy", "love", "great", "joy", "wonderful", "awesome", "smile", "delight",
        "amazing", "excellent", "fantastic", "cheerful", "glad", "blessed", "lovely",
        "brilliant", "grateful", "sunshine", "winner", "beautiful",
    ],
    Label.NEGATIVE: [
        "sad", "hate", "awful", "terrible", "angry", "cry", "miserable", "horrible",
        "worst", "pain", "lonely", "upset", "disgusting", "broken", "fail", "gloomy",
        "annoyed", "furious", "tired", "hurt",
    ],
    Label.NEUTRAL: [
        "today", "meeting", "schedule", "report", "weather", "train", "office",
        "update", "monday", "table", "paper", "window", "street", "coffee", "notice",
        "number", "station", "minute", "program", "channel",
    ],
}

DEFAULT_SHARED_BANK: List[str] = [
    "the", "a", "is", "it", "this", "and", "to", "of", "my", "was",
    "i", "am", "so", "we", "you", "on", "for", "at", "with", "just",
]

# Class mix of the combined tweet corpus the toolkit was built around.
REFERENCE_DISTRIBUTION: Dict[Label, int] = {
    Label.POSITIVE: 62629,
    Label.NEGATIVE: 55477,
    Label.NEUTRAL: 13495,
}


class SyntheticSpec(BaseModel):
    counts: Dict[Label, int]
    banks: Dict[Label, List[str]] = Field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_BANKS.items()})
    shared_bank: List[str] = Field(default_factory=lambda: list(DEFAULT_SHARED_BANK))
    overlap: float = Field(default=0.0, ge=0.0, le=1.0)
    min_length: int = Field(default=5, ge=1)
    max_length: int = Field(default=12, ge=1)

    @field_validator("counts", "banks", mode="before")
    @classmethod
    def coerce_label_keys(cls, value):
        if isinstance(value, Mapping):
            return {Label.parse(k): v for k, v in value.items()}
        return value

    @field_validator("counts")
    @classmethod
    def check_non_negative(cls, counts):
        for label, n in counts.items():
            if n < 0:
                raise ValueError(f"count for {label.text} must be >= 0")
        return counts

    @model_validator(mode="after")
    def check_length_range(self):
        if self.max_length < self.min_length:
            raise ValueError("max_length must be >= min_length")
        return self


def generate_synthetic_corpus(spec: SyntheticSpec, seed: int = 0) -> List[LabeledDocument]:
    """
    Seeded fixture factory. Each token of a document comes from the shared
    bank with probability `overlap`, otherwise from its class bank.
    """
    for label in Label:
        if spec.counts.get(label, 0) > 0 and not spec.banks.get(label):
            raise SyntheticSpecError(f"empty vocabulary bank for class {label.text} with nonzero count")
    if spec.overlap > 0 and not spec.shared_bank:
        raise SyntheticSpecError("overlap > 0 requires a non-empty shared bank")

    rng = np.random.default_rng(seed)
    rows = []
    for label in Label:
        bank = spec.banks.get(label, [])
        for _ in range(spec.counts.get(label, 0)):
            length = int(rng.integers(spec.min_length, spec.max_length + 1))
            shared = rng.random(length) < spec.overlap
            tokens = [
                spec.shared_bank[rng.integers(len(spec.shared_bank))] if s else bank[rng.integers(len(bank))]
                for s in shared
            ]
            rows.append((" ".join(tokens), label))

    order = rng.permutation(len(rows))
    return [LabeledDocument(id=i, text=rows[j][0], label=rows[j][1]) for i, j in enumerate(order)]
