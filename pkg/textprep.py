"""Tweet normalization and tokenization shared by both vectorizer paths."""
import re
import unicodedata
from dataclasses import dataclass
from typing import Iterable, List, Tuple

from corpus import Label, LabeledDocument

# URL removal also eats one trailing whitespace character.
_URL_RE = re.compile(r"[^\W\d_][\w+.\-]*://\S*\s?")
_MENTION_RE = re.compile(r"@\w+")
_HASHTAG_RE = re.compile(r"#+(?=\w)")
_SPLIT_RE = re.compile(r"[\W_]+")
_WHITESPACE_CONTROLS = {"\t": " ", "\n": " ", "\r": " ", "\x0b": " ", "\x0c": " "}


@dataclass(frozen=True)
class TokenizedDocument:
    id: int
    tokens: Tuple[str, ...]
    label: Label


def _strip_controls(text: str) -> str:
    return "".join(
        _WHITESPACE_CONTROLS.get(ch, "") if unicodedata.category(ch) == "Cc" else ch
        for ch in text
    )


def normalize(text: str) -> str:
    """
    Lowercase, NFC-normalize, drop control characters, URLs and @-mentions,
    and keep the word of a #hashtag.
    """
    text = unicodedata.normalize("NFC", text.lower())
    text = _strip_controls(text)
    # Removing one pattern can expose another ("@#bob"), so run to a fixed point.
    while True:
        cleaned = _HASHTAG_RE.sub("", _MENTION_RE.sub("", _URL_RE.sub("", text)))
        if cleaned == text:
            return cleaned
        text = cleaned


def tokenize(text: str) -> List[str]:
    """Splits on runs of non-alphanumeric characters (apostrophes included)."""
    return [t.lower() for t in _SPLIT_RE.split(text) if t]


def prepare(docs: Iterable[LabeledDocument]) -> List[TokenizedDocument]:
    return [
        TokenizedDocument(id=doc.id, tokens=tuple(tokenize(normalize(doc.text))), label=doc.label)
        for doc in docs
    ]


def prepare_text(text: str) -> Tuple[str, ...]:
    return tuple(tokenize(normalize(text)))
