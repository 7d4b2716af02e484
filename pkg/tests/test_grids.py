import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from semsight.grids import (
    GridError,
    NUM_CLASSES,
    SemClass,
    apply_unexplored_mask,
    as_labels,
    free_mask,
    onehot_encode,
)

from tiny_oracle import TINY_COUNTS

label_grids = arrays(
    np.uint8,
    st.tuples(st.integers(1, 12), st.integers(1, 12)),
    elements=st.integers(0, NUM_CLASSES - 1),
)


def masks_like(shape):
    return arrays(np.bool_, shape)


class TestOnehot:
    def test_single_class_grid(self):
        labels = np.full((2, 2), SemClass.WALL, dtype=np.uint8)
        onehot = onehot_encode(labels)
        assert (onehot[:, :, SemClass.WALL] == 1).all()
        others = np.delete(onehot, SemClass.WALL, axis=2)
        assert (others == 0).all()

    @given(label_grids)
    def test_argmax_round_trip(self, labels):
        onehot = onehot_encode(labels)
        assert (onehot.argmax(axis=2) == labels).all()
        assert (onehot.sum(axis=2) == 1).all()

    def test_tiny_channel_sums_match_census(self, tiny):
        onehot = onehot_encode(tiny.labels)
        for cls in range(NUM_CLASSES):
            assert onehot[:, :, cls].sum() == TINY_COUNTS.get(cls, 0)

    def test_rejects_out_of_range(self):
        with pytest.raises(GridError):
            as_labels(np.full((2, 2), 10, dtype=np.int64))


class TestApplyUnexploredMask:
    def test_full_mask_annihilates(self, tiny):
        gt = onehot_encode(tiny.labels)
        out = apply_unexplored_mask(gt, np.ones(tiny.labels.shape, dtype=bool))
        assert (out == 0).all()

    def test_empty_mask_is_identity(self, tiny):
        gt = onehot_encode(tiny.labels)
        out = apply_unexplored_mask(gt, np.zeros(tiny.labels.shape, dtype=bool))
        assert (out == gt).all()

    def test_left_half_explored_against_naive_loop(self, tiny):
        gt = onehot_encode(tiny.labels)
        explored = np.zeros(tiny.labels.shape, dtype=bool)
        explored[:, :4] = True
        out = apply_unexplored_mask(gt, explored)

        expected = np.empty_like(gt)
        for i in range(gt.shape[0]):
            for j in range(gt.shape[1]):
                for c in range(NUM_CLASSES):
                    expected[i, j, c] = gt[i, j, c] * (1 - explored[i, j])
        assert (out == expected).all()
        assert (out[:, :4] == 0).all()
        assert (out[:, 4:] == gt[:, 4:]).all()
        # one nonzero channel per unexplored cell
        assert out.sum() == (~explored).sum()

    def test_dimension_mismatch_errors(self, tiny):
        gt = onehot_encode(tiny.labels)
        with pytest.raises(GridError):
            apply_unexplored_mask(gt, np.zeros((4, 4), dtype=bool))

    @given(label_grids, st.data())
    @settings(max_examples=50)
    def test_idempotent_and_composes_by_or(self, labels, data):
        gt = onehot_encode(labels)
        m1 = data.draw(masks_like(labels.shape))
        m2 = data.draw(masks_like(labels.shape))
        once = apply_unexplored_mask(gt, m1)
        assert (apply_unexplored_mask(once, m1) == once).all()
        chained = apply_unexplored_mask(once, m2)
        merged = apply_unexplored_mask(gt, m1 | m2)
        assert (chained == merged).all()
        # unexplored cells stay bitwise identical to the input
        assert (once[~m1] == gt[~m1]).all()


def test_free_mask_matches_class_table(tiny):
    free = free_mask(tiny.labels)
    for r in range(8):
        for c in range(8):
            expected = tiny.labels[r, c] not in (SemClass.WALL, SemClass.OUTSIDE)
            assert free[r, c] == expected
