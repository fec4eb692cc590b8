import numpy as np
import pytest

from corpus import Label
from errors import EmptyMatrixError, ShapeError
from metrics import (
    ConfusionMatrix,
    confusion,
    evaluate,
    format_percent,
    majority_baseline,
    majority_label,
    weighted_report,
)

# Test-split class counts of the reference corpus.
TEST_COUNTS = {Label.POSITIVE: 18789, Label.NEGATIVE: 16643, Label.NEUTRAL: 4049}


def _labels(counts):
    return np.concatenate([np.full(n, int(label)) for label, n in counts.items()])


def test_constant_positive_baseline_row():
    y_true = _labels(TEST_COUNTS)
    y_pred = majority_baseline([Label.POSITIVE, Label.POSITIVE, Label.NEGATIVE], len(y_true))
    report = evaluate(y_true, y_pred)
    assert report.as_percentages() == {
        "accuracy": "47.6",
        "precision": "22.6",
        "recall": "47.6",
        "f_score": "30.7",
    }
    # Never-predicted classes score 0 rather than failing.
    assert report.per_class[Label.NEGATIVE].precision == 0.0
    assert report.per_class[Label.NEUTRAL].f1 == 0.0
    assert confusion(y_true, y_pred).counts[:, 0].sum() == len(y_true)


def test_weighted_recall_equals_accuracy():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        counts = rng.integers(0, 50, size=(3, 3))
        if counts.sum() == 0:
            continue
        report = weighted_report(ConfusionMatrix(counts=counts))
        assert abs(report.weighted_recall - report.accuracy) <= 1e-12
        values = [report.accuracy, report.weighted_precision, report.weighted_f1]
        values += [s.precision for s in report.per_class.values()]
        values += [s.f1 for s in report.per_class.values()]
        assert all(0.0 <= v <= 1.0 for v in values)


def test_relabeling_symmetry(rng):
    counts = rng.integers(0, 30, size=(3, 3))
    perm = [2, 0, 1]
    original = weighted_report(ConfusionMatrix(counts=counts))
    relabeled = weighted_report(ConfusionMatrix(counts=counts[np.ix_(perm, perm)]))
    assert relabeled.accuracy == pytest.approx(original.accuracy, abs=1e-12)
    assert relabeled.weighted_precision == pytest.approx(original.weighted_precision, abs=1e-12)
    assert relabeled.weighted_f1 == pytest.approx(original.weighted_f1, abs=1e-12)
    for new, old in enumerate(perm):
        assert relabeled.per_class[Label(new)].recall == pytest.approx(original.per_class[Label(old)].recall)


def test_perfect_predictions():
    y = [0, 1, 2, 2, 1]
    cm = confusion(y, y)
    assert np.array_equal(cm.counts, np.diag([1, 2, 2]))
    report = weighted_report(cm)
    values = [report.accuracy, report.weighted_precision, report.weighted_recall, report.weighted_f1]
    assert values == pytest.approx([1.0, 1.0, 1.0, 1.0])


def test_single_misprediction_cell():
    cm = confusion([Label.NEGATIVE], [Label.NEUTRAL])
    assert cm.counts[1][2] == 1
    assert cm.total == 1


def test_uniform_random_predictions_are_near_chance():
    rng = np.random.default_rng(42)
    y_true = np.repeat([0, 1, 2], 1000)
    report = evaluate(y_true, rng.integers(0, 3, size=3000))
    assert abs(report.accuracy - 1 / 3) <= 0.03


def test_input_errors():
    with pytest.raises(ShapeError):
        confusion([0, 1], [0])
    with pytest.raises(ShapeError):
        confusion([], [])
    with pytest.raises(EmptyMatrixError):
        weighted_report(ConfusionMatrix(counts=np.zeros((3, 3), dtype=int)))


@pytest.mark.parametrize("value, text", [
    (0.47590, "47.6"),
    (0.22648, "22.6"),
    (0.30690, "30.7"),
    (0.0005, "0.1"),
    (0.75625, "75.6"),
    (1.0, "100.0"),
])
def test_format_percent(value, text):
    assert format_percent(value) == text


def test_majority_label_ties_go_to_lowest_code():
    assert majority_label([Label.NEUTRAL, Label.NEGATIVE]) is Label.NEGATIVE
    assert majority_label([2, 2, 1]) is Label.NEUTRAL


def test_report_dict_has_per_class_detail():
    record = evaluate([0, 1, 2], [0, 1, 1]).to_dict()
    assert set(record) == {"accuracy", "precision", "recall", "f_score", "per_class"}
    assert record["per_class"]["neutral"]["support"] == 1
    assert record["per_class"]["negative"]["precision"] == 0.5
