import math

import numpy as np
import pytest

import vectorizer
from errors import EncodeError, FitError, ModelVersionError
from vectorizer import OOV_CODE, PAD_CODE, TfidfConfig, TfidfModel


def _oracle(train, doc, min_df, max_df, max_features):
    """Brute-force TF-IDF weights keyed by term."""
    n = len(train)
    df = {}
    for tokens in train:
        for term in set(tokens):
            df[term] = df.get(term, 0) + 1
    kept = sorted(
        (t for t, c in df.items() if c >= min_df and c / n <= max_df),
        key=lambda t: (-df[t], t),
    )[:max_features]
    return {t: doc.count(t) * math.log(n / df[t]) for t in kept if t in doc}


def test_matches_oracle_on_random_corpora():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n_terms = int(rng.integers(1, 21))
        terms = [f"w{i}" for i in range(n_terms)]
        train = [
            [terms[j] for j in rng.integers(0, n_terms, size=int(rng.integers(1, 8)))]
            for _ in range(int(rng.integers(1, 11)))
        ]
        config = TfidfConfig(
            min_df=int(rng.integers(1, 3)),
            max_df=float(rng.choice([0.5, 0.8, 1.0])),
            max_features=int(rng.integers(1, 25)),
        )
        try:
            model = vectorizer.fit(train, config)
        except FitError:
            continue
        terms_by_index = model.vocabulary.terms
        for doc in train + [["w0", "w0", "unseen"]]:
            expected = _oracle(train, doc, config.min_df, config.max_df, config.max_features)
            got = {terms_by_index[i]: w for i, w in vectorizer.transform(model, doc).entries}
            assert got.keys() == expected.keys()
            for term, weight in expected.items():
                assert abs(got[term] - weight) <= 1e-12


def test_vocabulary_order_is_df_then_lexicographic():
    train = [["b", "a", "c"], ["a", "c"], ["c"]]
    model = vectorizer.fit(train, TfidfConfig(max_features=2))
    assert model.vocabulary.terms == ["c", "a"]
    assert model.vocabulary.df == (3, 2)


def test_term_in_every_document_weighs_zero():
    model = vectorizer.fit([["x", "y"], ["x"]])
    vector = vectorizer.transform(model, ["x", "y", "y"])
    weights = dict(zip(model.vocabulary.terms, [0.0] * model.n_features))
    weights.update({model.vocabulary.terms[i]: w for i, w in vector.entries})
    assert weights["x"] == 0.0
    assert weights["y"] == pytest.approx(2 * math.log(2))


def test_unknown_tokens_are_ignored():
    model = vectorizer.fit([["a"], ["b"]])
    assert len(vectorizer.transform(model, ["zzz"])) == 0


def test_nothing_survives_filters():
    with pytest.raises(FitError):
        vectorizer.fit([["a"], ["b"]], TfidfConfig(min_df=2))
    with pytest.raises(FitError):
        vectorizer.fit([])


def test_transform_matrix_rows_equal_transform(toy_tokens):
    model = vectorizer.fit(toy_tokens)
    matrix = vectorizer.transform_matrix(model, toy_tokens)
    assert matrix.shape == (len(toy_tokens), model.n_features)
    for row, doc in enumerate(toy_tokens):
        vector = vectorizer.transform(model, doc)
        dense = np.zeros(model.n_features)
        dense[vector.indices] = vector.weights
        np.testing.assert_array_equal(matrix[row].toarray().ravel(), dense)


def test_dict_round_trip_reproduces_weights(toy_tokens):
    model = vectorizer.fit(toy_tokens, TfidfConfig(max_features=5))
    restored = TfidfModel.from_dict(model.to_dict())
    assert restored.vocabulary == model.vocabulary
    np.testing.assert_array_equal(restored.idf, model.idf)


def test_unknown_version_is_rejected(toy_tokens):
    record = vectorizer.fit(toy_tokens).to_dict()
    record["version"] = 7
    with pytest.raises(ModelVersionError):
        TfidfModel.from_dict(record)


def test_encode_sequences_pads_truncates_and_marks_oov():
    model = vectorizer.fit([["a", "b"], ["a"]])
    batch = vectorizer.encode_sequences(model, [["a", "zzz"], ["b", "a", "b", "a"]], max_len=3)
    a = model.vocabulary.term_to_index["a"] + 2
    b = model.vocabulary.term_to_index["b"] + 2
    np.testing.assert_array_equal(batch.codes, [[a, OOV_CODE, PAD_CODE], [b, a, b]])
    assert batch.vocab_size == 2


def test_encode_sequences_rejects_zero_length():
    model = vectorizer.fit([["a"]])
    with pytest.raises(EncodeError):
        vectorizer.encode_sequences(model, [["a"]], max_len=0)


def test_idf_strictly_falls_as_df_rises():
    rng = np.random.default_rng(9)
    terms = [f"w{i}" for i in range(30)]
    train = [list(rng.choice(terms, size=6)) for _ in range(40)]
    model = vectorizer.fit(train, TfidfConfig(max_features=30))
    df = np.asarray(model.vocabulary.df)
    for i in range(len(df)):
        for j in range(len(df)):
            if df[i] < df[j]:
                assert model.idf[i] > model.idf[j]


def test_repeated_transform_is_bit_identical(toy_tokens):
    model = vectorizer.fit(toy_tokens)
    first = vectorizer.transform(model, toy_tokens[2])
    second = vectorizer.transform(model, toy_tokens[2])
    np.testing.assert_array_equal(first.indices, second.indices)
    assert first.weights.tobytes() == second.weights.tobytes()


def test_fit_ignores_document_order(toy_tokens):
    shuffled = [toy_tokens[i] for i in np.random.default_rng(3).permutation(len(toy_tokens))]
    a = vectorizer.fit(toy_tokens)
    b = vectorizer.fit(shuffled)
    assert a.to_dict() == b.to_dict()
    assert a.idf.tobytes() == b.idf.tobytes()
