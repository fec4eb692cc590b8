import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corpus import (  # noqa: E402
    REFERENCE_DISTRIBUTION,
    Label,
    LabeledDocument,
    SyntheticSpec,
    generate_synthetic_corpus,
    proportional_counts,
    save_corpus,
)
from textprep import prepare  # noqa: E402


def separable_docs(total: int, seed: int = 0):
    """Class-disjoint vocabularies in the reference class mix."""
    spec = SyntheticSpec(counts=proportional_counts(total, REFERENCE_DISTRIBUTION))
    return generate_synthetic_corpus(spec, seed)


@pytest.fixture
def toy_docs():
    rows = [
        ("I love this, so happy!", Label.POSITIVE),
        ("What a great day #win", Label.POSITIVE),
        ("happy happy joy", Label.POSITIVE),
        ("this is awful @bob", Label.NEGATIVE),
        ("I hate rainy mondays", Label.NEGATIVE),
        ("sad and tired", Label.NEGATIVE),
        ("meeting at noon http://x.co/a", Label.NEUTRAL),
        ("the report is on the table", Label.NEUTRAL),
    ]
    return [LabeledDocument(id=i, text=t, label=l) for i, (t, l) in enumerate(rows)]


@pytest.fixture
def toy_tokens(toy_docs):
    return prepare(toy_docs)


@pytest.fixture(scope="session")
def separable_corpus():
    return separable_docs(600, seed=7)


@pytest.fixture
def separable_csv(tmp_path):
    path = tmp_path / "corpus.csv"
    save_corpus(separable_docs(600, seed=3), path)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
