import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import svdvals

from mvfusion.errors import DataError, DimensionError, IoError, LabelError, ParseError
from mvfusion.matrixio import (
    FeatureSet,
    LabeledDataset,
    center_samples,
    load_dataset,
    load_matrix,
    numerical_rank,
    save_dataset,
    save_matrix,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
matrices = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite)


class TestLoadSave:
    def test_csv_readback(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1,2,3\n4,5,6")
        m = load_matrix(path, "csv")
        assert m.shape == (2, 3)
        np.testing.assert_array_equal(m, [[1, 2, 3], [4, 5, 6]])

    def test_fmat_round_trip_bit_identical(self, tmp_path, rng):
        m = rng.standard_normal((4, 7))
        save_matrix(m, tmp_path / "m.fmat", "fmat")
        back = load_matrix(tmp_path / "m.fmat", "fmat")
        assert back.tobytes() == m.tobytes()

    def test_fmat_layout(self, tmp_path):
        save_matrix(np.array([[1.0, 2.0]]), tmp_path / "m.fmat")
        raw = (tmp_path / "m.fmat").read_bytes()
        assert raw[:6] == b"FMAT1\x00"
        assert int.from_bytes(raw[6:14], "little") == 1
        assert int.from_bytes(raw[14:22], "little") == 2
        assert np.frombuffer(raw[22:], "<f8").tolist() == [1.0, 2.0]

    def test_nan_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1,NaN\n2,3\n")
        with pytest.raises(DataError):
            load_matrix(path, "csv")

    def test_inf_rejected_on_save(self, tmp_path):
        with pytest.raises(DataError):
            save_matrix(np.array([[np.inf]]), tmp_path / "m.fmat")

    def test_ragged_rows(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1,2\n3\n")
        with pytest.raises(DimensionError):
            load_matrix(path, "csv")

    def test_malformed_csv(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1,abc\n")
        with pytest.raises(ParseError):
            load_matrix(path, "csv")

    def test_truncated_fmat(self, tmp_path):
        save_matrix(np.eye(3), tmp_path / "m.fmat")
        raw = (tmp_path / "m.fmat").read_bytes()
        (tmp_path / "t.fmat").write_bytes(raw[:-8])
        with pytest.raises(ParseError):
            load_matrix(tmp_path / "t.fmat", "fmat")

    def test_identity_fmat(self, tmp_path):
        save_matrix(np.eye(3), tmp_path / "i.fmat")
        np.testing.assert_array_equal(load_matrix(tmp_path / "i.fmat"), np.eye(3))

    def test_empty_path(self):
        with pytest.raises(IoError):
            save_matrix(np.eye(2), "", "fmat")

    def test_one_by_one_csv(self, tmp_path):
        save_matrix(np.array([[7.5]]), tmp_path / "s.csv", "csv")
        np.testing.assert_array_equal(load_matrix(tmp_path / "s.csv", "csv"), [[7.5]])

    def test_csv_round_trip_precision(self, tmp_path, rng):
        m = rng.standard_normal((3, 5)) * 1e3
        save_matrix(m, tmp_path / "m.csv", "csv")
        back = load_matrix(tmp_path / "m.csv", "csv")
        assert np.max(np.abs(back - m) / np.abs(m)) <= 1e-15

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ParseError):
            save_matrix(np.eye(2), tmp_path / "x", "npy")

    @settings(max_examples=50, deadline=None)
    @given(m=matrices)
    def test_fmat_round_trip_property(self, tmp_path_factory, m):
        path = tmp_path_factory.mktemp("rt") / "m.fmat"
        save_matrix(m, path)
        assert load_matrix(path).tobytes() == m.tobytes()


class TestDataset:
    def test_manifest_round_trip(self, tmp_path, rng):
        views = (
            FeatureSet(rng.standard_normal((3, 6)), name="a"),
            FeatureSet(rng.standard_normal((2, 6)), name="b"),
        )
        ds = LabeledDataset(views, np.array([0, 1, 2, 0, 1, 2]), 3)
        manifest = save_dataset(ds, tmp_path, "train")
        back = load_dataset(manifest)
        assert back.class_count == 3
        assert [v.name for v in back.views] == ["a", "b"]
        np.testing.assert_array_equal(back.labels, ds.labels)
        for v, w in zip(back.views, views):
            assert v.matrix.tobytes() == w.matrix.tobytes()

    def test_sample_count_mismatch(self, rng):
        with pytest.raises(DimensionError):
            LabeledDataset(
                (FeatureSet(rng.standard_normal((2, 4))), FeatureSet(rng.standard_normal((2, 5)))),
                np.zeros(4, dtype=int),
                2,
            )

    def test_label_out_of_range(self, rng):
        with pytest.raises(LabelError):
            LabeledDataset((FeatureSet(rng.standard_normal((2, 3))),), np.array([0, 1, 2]), 2)

    def test_empty_classes_allowed(self, rng):
        ds = LabeledDataset((FeatureSet(rng.standard_normal((2, 3))),), np.array([0, 0, 2]), 4)
        assert ds.n == 3


class TestCentering:
    def test_arithmetic(self):
        fs = center_samples(FeatureSet(np.array([[1.0, 3.0], [2.0, 2.0]])))
        np.testing.assert_array_equal(fs.matrix, [[-1, 1], [0, 0]])
        np.testing.assert_array_equal(fs.mean, [2, 2])
        assert fs.centered

    def test_original_untouched(self):
        orig = FeatureSet(np.array([[1.0, 3.0]]))
        center_samples(orig)
        np.testing.assert_array_equal(orig.matrix, [[1.0, 3.0]])
        assert not orig.centered

    def test_zero_mean_unchanged(self):
        m = np.array([[1.0, -1.0], [-2.0, 2.0]])
        fs = center_samples(FeatureSet(m))
        np.testing.assert_array_equal(fs.matrix, m)
        np.testing.assert_allclose(fs.mean, 0, atol=1e-15)

    def test_single_sample(self):
        fs = center_samples(FeatureSet(np.array([[4.0], [-1.5]])))
        np.testing.assert_array_equal(fs.matrix, 0)
        np.testing.assert_array_equal(fs.mean, [4.0, -1.5])

    @settings(max_examples=50, deadline=None)
    @given(m=matrices)
    def test_idempotent(self, m):
        once = center_samples(FeatureSet(m))
        twice = center_samples(once)
        np.testing.assert_allclose(twice.matrix, once.matrix, rtol=0, atol=1e-12 * max(1, np.abs(m).max()))
        np.testing.assert_array_equal(twice.mean.shape, (m.shape[0],))

    @settings(max_examples=50, deadline=None)
    @given(m=matrices)
    def test_rows_sum_to_zero(self, m):
        fs = center_samples(FeatureSet(m))
        bound = 1e-9 * m.shape[1] * max(np.abs(m).max(), 1e-300)
        assert np.all(np.abs(fs.matrix.sum(axis=1)) <= bound)


class TestRank:
    def test_identity(self):
        assert numerical_rank(np.eye(3)) == 3

    def test_zero(self):
        assert numerical_rank(np.zeros((4, 5))) == 0

    def test_outer_product(self, rng):
        u = rng.standard_normal(4) + 0.1
        v = rng.standard_normal(6) + 0.1
        m = np.outer(u, v)
        # independent reference: LAPACK gesdd via scipy, same tolerance rule
        s = svdvals(m)
        assert np.sum(s > max(m.shape) * np.finfo(float).eps * s[0]) == 1
        assert numerical_rank(m) == 1

    def test_explicit_tolerance(self):
        m = np.diag([1.0, 1e-3, 1e-9])
        assert numerical_rank(m, 1e-6) == 2
        assert numerical_rank(m, 0.0) == 3

    @settings(max_examples=50, deadline=None)
    @given(m=matrices)
    def test_rank_bounded(self, m):
        assert numerical_rank(m) <= min(m.shape)
