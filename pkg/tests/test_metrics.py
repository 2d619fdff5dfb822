import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvfusion.errors import DimensionError, EmptyError, LabelError, ParseError
from mvfusion.metrics import (
    CSV_COLUMNS,
    ClassMetrics,
    ConfusionMatrix,
    aggregate,
    confusion_matrix,
    overall_metrics,
    parse_report_csv,
    per_class_metrics,
    report,
)

confusions = st.integers(2, 6).flatmap(
    lambda c: st.lists(st.integers(0, 30), min_size=c * c, max_size=c * c).map(
        lambda v: np.array(v).reshape(c, c)
    )
).filter(lambda m: m.sum() > 0)


class TestConfusionMatrix:
    def test_identity(self):
        np.testing.assert_array_equal(confusion_matrix([0, 1, 2], [0, 1, 2], 3).counts, np.eye(3))

    def test_off_diagonal(self):
        cm = confusion_matrix([0, 0], [1, 1], 2)
        np.testing.assert_array_equal(cm.counts, [[0, 2], [0, 0]])

    def test_loop_oracle(self, rng):
        a, p = rng.integers(0, 4, 1000), rng.integers(0, 4, 1000)
        expected = np.zeros((4, 4), int)
        for i, j in zip(a, p):
            expected[i, j] += 1
        cm = confusion_matrix(a, p, 4)
        np.testing.assert_array_equal(cm.counts, expected)
        assert cm.n_total == 1000

    def test_contract_errors(self):
        with pytest.raises(DimensionError):
            confusion_matrix([0, 1], [0], 2)
        with pytest.raises(LabelError):
            confusion_matrix([0, 2], [0, 1], 2)
        with pytest.raises(DimensionError):
            ConfusionMatrix(np.zeros((2, 3)))


class TestPerClass:
    def test_perfect_ten_classes(self):
        for m in per_class_metrics(ConfusionMatrix(100 * np.eye(10, dtype=int))):
            assert (m.sensitivity, m.specificity, m.precision, m.fpr) == (1, 1, 1, 0)
            assert m.total_accuracy == pytest.approx(0.1)

    def test_binary_example(self):
        c0, c1 = per_class_metrics(ConfusionMatrix(np.array([[9, 1], [0, 10]])))
        assert (c0.sensitivity, c0.precision, c0.specificity, c0.fpr) == (0.9, 1.0, 1.0, 0.0)
        assert c1.sensitivity == 1.0
        assert c1.precision == pytest.approx(10 / 11, abs=1e-15)
        assert c1.fpr == pytest.approx(0.1, abs=1e-15)

    def test_never_predicted_class_is_flagged(self):
        c0, c1 = per_class_metrics(ConfusionMatrix(np.array([[3, 0], [2, 0]])))
        assert c1.precision == 0.0 and c1.degenerate
        assert not c0.degenerate

    def test_empty(self):
        with pytest.raises(EmptyError):
            per_class_metrics(ConfusionMatrix(np.zeros((3, 3), int)))

    @settings(max_examples=60, deadline=None)
    @given(confusions)
    def test_identities(self, counts):
        for m in per_class_metrics(ConfusionMatrix(counts)):
            assert m.fpr + m.specificity == pytest.approx(1, abs=1e-12)
            assert m.single_accuracy + m.error_single == pytest.approx(1, abs=1e-12)
            assert m.single_accuracy == m.sensitivity
            for v in (m.sensitivity, m.specificity, m.precision, m.fpr, m.total_accuracy):
                assert 0.0 <= v <= 1.0


class TestOverall:
    def test_perfect(self):
        o = overall_metrics(ConfusionMatrix(5 * np.eye(4, dtype=int)))
        assert o.accuracy == 1.0 and o.fpr == 0.0 and o.error == 0.0

    @settings(max_examples=60, deadline=None)
    @given(confusions, st.randoms(use_true_random=False))
    def test_macro_and_trace(self, counts, random):
        cm = ConfusionMatrix(counts)
        per = per_class_metrics(cm)
        o = overall_metrics(cm)
        assert o.accuracy == pytest.approx(np.trace(counts) / counts.sum(), abs=1e-15)
        assert sum(m.total_accuracy for m in per) == pytest.approx(o.accuracy, abs=1e-12)
        assert o.precision == pytest.approx(np.mean([m.precision for m in per]), abs=1e-15)
        assert o.accuracy + o.error == pytest.approx(1, abs=1e-12)
        # relabel the classes
        perm = list(range(counts.shape[0]))
        random.shuffle(perm)
        permuted = ConfusionMatrix(counts[np.ix_(perm, perm)])
        assert per_class_metrics(permuted) == [per[i] for i in perm]
        op = overall_metrics(permuted)
        for name in ("accuracy", "sensitivity", "specificity", "precision", "fpr"):
            assert getattr(op, name) == pytest.approx(getattr(o, name), abs=1e-12)

    def test_aggregate_empty(self):
        with pytest.raises(EmptyError):
            aggregate([])


class TestReport:
    def test_two_class_perfect(self):
        text = report(ConfusionMatrix(np.eye(2, dtype=int) * 4), ["a", "b"]).to_csv()
        lines = text.splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 4 and lines[-1].startswith("OVERALL,")
        for line in lines[1:]:
            assert float(line.split(",")[1]) == 1.0

    def test_round_trip_is_exact(self, rng):
        cm = ConfusionMatrix(rng.integers(0, 50, (5, 5)))
        rep = report(cm)
        classes, overall = parse_report_csv(rep.to_csv())
        assert [m for _, m in classes] == [
            ClassMetrics(*[getattr(m, f) for f in ClassMetrics.__dataclass_fields__][:8])
            for m in rep.per_class
        ]
        assert overall == rep.overall

    def test_names_mismatch(self):
        with pytest.raises(DimensionError):
            report(ConfusionMatrix(np.eye(3, dtype=int)), ["a", "b"])

    def test_bad_header(self):
        with pytest.raises(ParseError):
            parse_report_csv("nope\n")

    def test_write(self, tmp_path):
        csv_path, txt_path = report(ConfusionMatrix(np.eye(2, dtype=int))).write(tmp_path)
        assert csv_path.read_text().startswith("class,")
        assert "OVERALL" in txt_path.read_text()
