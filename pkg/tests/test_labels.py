"""Label-vector set algebra against a Python-set oracle."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coattn.errors import DimensionError
from coattn.labels import LabelVector, has_common, intersect, subtract


def _bits(value: int, k: int) -> list[int]:
    return [(value >> i) & 1 for i in range(k)]


def _as_set(v: LabelVector) -> set:
    return set(v.to_indices())


class TestExhaustiveAlgebra:
    """Every pair of K=4 label vectors against plain set operations."""

    K = 4

    def test_all_pairs_match_set_oracle(self):
        vectors = [LabelVector(_bits(v, self.K)) for v in range(2 ** self.K)]
        mismatches = 0
        for a, b in itertools.product(vectors, repeat=2):
            sa, sb = _as_set(a), _as_set(b)
            if _as_set(a.intersect(b)) != sa & sb:
                mismatches += 1
            if _as_set(a.subtract(b)) != sa - sb:
                mismatches += 1
            if _as_set(a.union(b)) != sa | sb:
                mismatches += 1
            if a.has_common(b) != bool(sa & sb):
                mismatches += 1
        assert mismatches == 0


label_pairs = st.integers(min_value=1, max_value=8).flatmap(
    lambda k: st.tuples(
        st.lists(st.integers(0, 1), min_size=k, max_size=k),
        st.lists(st.integers(0, 1), min_size=k, max_size=k)))


class TestProperties:
    @given(label_pairs)
    @settings(max_examples=200, deadline=None)
    def test_intersect_commutes_and_bounds(self, pair):
        a, b = LabelVector(pair[0]), LabelVector(pair[1])
        both = a.intersect(b)
        assert both == b.intersect(a)
        assert _as_set(both) <= _as_set(a)
        assert _as_set(both) <= _as_set(b)

    @given(label_pairs)
    @settings(max_examples=200, deadline=None)
    def test_subtract_is_never_negative(self, pair):
        a, b = LabelVector(pair[0]), LabelVector(pair[1])
        diff = a.subtract(b)
        assert set(diff.bits.tolist()) <= {0, 1}
        assert _as_set(diff) == _as_set(a) - _as_set(b)

    @given(label_pairs)
    @settings(max_examples=200, deadline=None)
    def test_partition_reconstructs_original(self, pair):
        a, b = LabelVector(pair[0]), LabelVector(pair[1])
        assert a.intersect(b).union(a.subtract(b)) == a

    @given(label_pairs)
    @settings(max_examples=200, deadline=None)
    def test_has_common_iff_intersection_nonempty(self, pair):
        a, b = LabelVector(pair[0]), LabelVector(pair[1])
        assert a.has_common(b) == a.intersect(b).any()


class TestConstruction:
    def test_from_indices_round_trip(self):
        v = LabelVector.from_indices([1, 3], 4)
        assert v.to_indices() == [1, 3]
        np.testing.assert_array_equal(v.bits, [1, 0, 1, 0])

    def test_from_indices_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            LabelVector.from_indices([0], 4)
        with pytest.raises(ValueError):
            LabelVector.from_indices([5], 4)

    def test_rejects_non_binary_entries(self):
        with pytest.raises(ValueError):
            LabelVector([0, 2, 1])

    def test_rejects_2d_input(self):
        with pytest.raises(DimensionError):
            LabelVector(np.zeros((2, 2), dtype=np.uint8))

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            LabelVector([1, 0]).intersect(LabelVector([1, 0, 1]))

    def test_bits_are_immutable(self):
        v = LabelVector([1, 0])
        with pytest.raises(ValueError):
            v.bits[0] = 0

    def test_as_float_dtype(self):
        assert LabelVector([1, 0]).as_float().dtype == np.float64

    def test_hash_and_eq(self):
        assert LabelVector([1, 0]) == LabelVector([1, 0])
        assert hash(LabelVector([1, 0])) == hash(LabelVector([1, 0]))
        assert LabelVector([1, 0]) != LabelVector([0, 1])
        assert LabelVector([1, 0]) != LabelVector([1, 0, 0])

    def test_module_level_aliases(self):
        a, b = LabelVector([1, 1]), LabelVector([0, 1])
        assert intersect(a, b) == a.intersect(b)
        assert subtract(a, b) == a.subtract(b)
        assert has_common(a, b)
