import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from umlr import (
    Dataset,
    DegeneratePartitionError,
    InvalidInputError,
    SplitIndices,
    center_outcome,
    partition_by_mean,
)


class TestDataset:
    def test_valid_construction(self):
        d = Dataset([[1.0], [2.0]], [0, 1], [0.5, 1.5])
        assert d.n == 2 and d.p == 1
        assert d.t.dtype == np.int64

    def test_arrays_read_only(self):
        d = Dataset([[1.0], [2.0]], [0, 1], [0.5, 1.5])
        with pytest.raises(ValueError):
            d.X[0, 0] = 9.0

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            Dataset([[1.0], [2.0]], [0, 1, 1], [0.5, 1.5])

    def test_rejects_nan(self):
        with pytest.raises(InvalidInputError):
            Dataset([[np.nan], [2.0]], [0, 1], [0.5, 1.5])
        with pytest.raises(InvalidInputError):
            Dataset([[1.0], [2.0]], [0, 1], [np.inf, 1.5])

    def test_rejects_nonbinary_treatment(self):
        with pytest.raises(InvalidInputError):
            Dataset([[1.0], [2.0]], [0, 2], [0.5, 1.5])
        with pytest.raises(InvalidInputError):
            Dataset([[1.0], [2.0]], [0.0, 0.5], [0.5, 1.5])

    def test_needs_two_units(self):
        with pytest.raises(InvalidInputError):
            Dataset([[1.0]], [1], [0.5])

    def test_subset_resample(self):
        d = Dataset([[1.0], [2.0], [3.0]], [0, 1, 1], [1.0, 2.0, 3.0])
        sub = d.subset(np.array([2, 0, 2]))
        assert np.allclose(sub.y, [3.0, 1.0, 3.0])
        assert sub.t.tolist() == [1, 0, 1]


class TestSplitIndices:
    def test_must_cover_range(self):
        with pytest.raises(InvalidInputError):
            SplitIndices(r1=[0, 1], r2=[1, 2])
        with pytest.raises(InvalidInputError):
            SplitIndices(r1=[0], r2=[2])

    def test_sorted_storage(self):
        s = SplitIndices(r1=[2, 0], r2=[1, 3])
        assert s.r1.tolist() == [0, 2]
        assert s.r2.tolist() == [1, 3]


class TestCenterOutcome:
    def test_basic(self):
        c, m = center_outcome([1, 2, 3])
        assert m == 2.0
        assert np.allclose(c, [-1, 0, 1])

    def test_already_centered(self):
        c, m = center_outcome([0.0, 0.0])
        assert m == 0.0
        assert np.allclose(c, [0, 0])

    def test_single_element(self):
        c, m = center_outcome([5.0])
        assert m == 5.0
        assert np.allclose(c, [0.0])

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            center_outcome([])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60))
    def test_roundtrip_identity(self, values):
        y = np.asarray(values)
        c, m = center_outcome(y)
        scale = max(np.max(np.abs(y)), 1.0)
        assert abs(np.mean(c)) <= 1e-12 * scale
        assert np.allclose(c + m, y, rtol=1e-12, atol=1e-12 * scale)


class TestPartitionByMean:
    def test_basic(self):
        s = partition_by_mean([1, 2, 3])  # mean 2, ties at mean go low
        assert s.r1.tolist() == [0, 1]
        assert s.r2.tolist() == [2]

    def test_symmetric_pair(self):
        s = partition_by_mean([-1, 1])
        assert s.r1.tolist() == [0]
        assert s.r2.tolist() == [1]

    def test_constant_outcome_degenerate(self):
        with pytest.raises(DegeneratePartitionError):
            partition_by_mean([4.0, 4.0, 4.0])

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=80))
    def test_partition_invariants(self, values):
        y = np.asarray(values)
        if np.all(y == y[0]):
            with pytest.raises(DegeneratePartitionError):
                partition_by_mean(y)
            return
        s = partition_by_mean(y)
        assert s.both_nonempty or np.ptp(y) == 0
        mean = np.mean(y)
        assert np.all(y[s.r1] <= mean)
        assert np.all(y[s.r2] > mean)
        together = np.sort(np.concatenate([s.r1, s.r2]))
        assert together.tolist() == list(range(len(y)))
