"""Per-label word-frequency clouds rendered as plain text or a standalone HTML page."""
import html
import logging
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Literal, Optional, Sequence, Union

import nltk
from nltk.corpus import stopwords
from pydantic import BaseModel, Field

from corpus import Label
from errors import CloudError
from textprep import TokenizedDocument

logger = logging.getLogger("EmoForge")

N_BUCKETS = 5


@lru_cache(maxsize=1)
def english_stopwords() -> FrozenSet[str]:
    """NLTK's English stopword list, fetched on first use if the corpus is missing."""
    try:
        words = stopwords.words("english")
    except LookupError:
        logger.info("Downloading the NLTK stopwords corpus")
        nltk.download("stopwords", quiet=True)
        try:
            words = stopwords.words("english")
        except LookupError as e:
            raise CloudError(f"NLTK stopwords corpus unavailable: {e}")
    return frozenset(words)


_DOUBLED_CONSONANT_RE = re.compile(r"([b-df-hj-np-tv-z])\1$")


class CloudParams(BaseModel):
    max_words: int = Field(default=50, ge=1)
    min_freq: int = Field(default=2, ge=1)
    lowercase: bool = True
    exclude: Optional[FrozenSet[str]] = None  # None -> english_stopwords()
    group_similar: bool = False


@dataclass(frozen=True)
class CloudEntry:
    word: str
    frequency: int
    size_bucket: int


def stem(word: str) -> str:
    """
    Strips one trailing "ing", "ed" or "s" (not "ss") when at least three
    characters remain, then undoubles a final consonant: running -> run.
    """
    for suffix in ("ing", "ed", "s"):
        if word.endswith(suffix) and len(word) - len(suffix) >= 3:
            if suffix == "s" and word.endswith("ss"):
                break
            root = word[: -len(suffix)]
            return _DOUBLED_CONSONANT_RE.sub(r"\1", root)
    return word


def _group(counts: Counter) -> Counter:
    surfaces: Dict[str, List[str]] = {}
    for word in counts:
        surfaces.setdefault(stem(word), []).append(word)
    grouped = Counter()
    for words in surfaces.values():
        surface = min(words, key=lambda w: (len(w), w))
        grouped[surface] = sum(counts[w] for w in words)
    return grouped


def _buckets(frequencies: Sequence[int]) -> List[int]:
    """Quintile bucket per frequency; equal frequencies share the lowest rank."""
    ordered = sorted(frequencies)
    n = len(ordered)
    first_rank = {}
    for rank, freq in enumerate(ordered):
        first_rank.setdefault(freq, rank)
    return [1 + (N_BUCKETS * first_rank[f]) // n for f in frequencies]


def build_cloud(docs: Sequence[Union[TokenizedDocument, Sequence[str]]],
                params: CloudParams = None) -> List[CloudEntry]:
    """
    Counts token frequencies, drops excluded words, optionally merges words
    sharing a stem, then keeps words at or above min_freq, the top max_words
    by frequency (ties alphabetical). Entries come back in that order.
    """
    params = params or CloudParams()
    if not docs:
        raise CloudError("cannot build a tag cloud from zero documents")

    exclude = english_stopwords() if params.exclude is None else params.exclude
    counts = Counter()
    for doc in docs:
        tokens = doc.tokens if isinstance(doc, TokenizedDocument) else doc
        if params.lowercase:
            tokens = [t.lower() for t in tokens]
        counts.update(t for t in tokens if t not in exclude)
    if params.group_similar:
        counts = _group(counts)

    kept = sorted(
        ((word, n) for word, n in counts.items() if n >= params.min_freq),
        key=lambda item: (-item[1], item[0]),
    )[: params.max_words]
    buckets = _buckets([n for _, n in kept]) if kept else []
    logger.debug(f"Tag cloud: {len(counts)} distinct words, {len(kept)} shown")
    return [CloudEntry(word=w, frequency=n, size_bucket=b) for (w, n), b in zip(kept, buckets)]


def cloud_for_label(docs: Iterable[TokenizedDocument], label: Label, params: CloudParams = None) -> List[CloudEntry]:
    selected = [doc for doc in docs if doc.label == label]
    if not selected:
        raise CloudError(f"no documents labeled {label.text}")
    return build_cloud(selected, params)


_STYLE = """
body { font-family: sans-serif; margin: 2em; }
.cloud { line-height: 2.2em; text-align: center; }
.cloud span { margin: 0 0.4em; white-space: nowrap; }
.size-1 { font-size: 0.8em; color: #8a8a8a; }
.size-2 { font-size: 1.1em; color: #6b6b6b; }
.size-3 { font-size: 1.5em; color: #4d4d4d; }
.size-4 { font-size: 2.0em; color: #2e2e2e; }
.size-5 { font-size: 2.6em; color: #000000; }
"""


def render_cloud(entries: Sequence[CloudEntry], format: Literal["text", "html"] = "text",
                 title: str = "Tag cloud") -> str:
    if not entries:
        raise CloudError("tag cloud has no entries to render")
    ordered = sorted(entries, key=lambda e: e.word)
    if format == "text":
        return "\n".join(f"{e.word} ({e.frequency})" for e in ordered)
    if format != "html":
        raise CloudError(f"unknown cloud format {format!r}; expected text or html")

    spans = "\n".join(
        f'<span class="size-{e.size_bucket}" title="{e.frequency}">{html.escape(e.word)}</span>'
        for e in ordered
    )
    return (
        "<html>\n<head>\n<meta charset=\"utf-8\" />\n"
        f"<title>{html.escape(title)}</title>\n<style>{_STYLE}</style>\n</head>\n"
        f"<body>\n<h1>{html.escape(title)}</h1>\n<div class=\"cloud\">\n{spans}\n</div>\n</body>\n</html>\n"
    )
