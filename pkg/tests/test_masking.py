"""Masking statistics and special-token protection."""

import numpy as np
import pytest

from xsr.errors import ContractError
from xsr.masking import MaskedView, mask_batch, mask_sequence
from xsr.text import CLS_ID, MASK_ID, NUM_SPECIALS, PAD_ID, SEP_ID


def encoded(length, vocab_size=50, rng=None, pad=0):
    rng = rng or np.random.default_rng(0)
    body = rng.integers(NUM_SPECIALS, vocab_size, size=length).tolist()
    return [CLS_ID] + body + [SEP_ID] + [PAD_ID] * pad


class TestMaskSequence:
    def test_p_zero_masks_nothing(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            ids = encoded(9, rng=rng)
            view = mask_sequence(ids, 0.0, rng, 50)
            assert view.num_masked == 0
            np.testing.assert_array_equal(view.input_ids, ids)

    def test_specials_never_masked(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            ids = encoded(8, rng=rng, pad=3)
            view = mask_sequence(ids, 0.9, rng, 50)
            ids_arr = np.asarray(ids)
            assert np.all(ids_arr[view.positions] >= NUM_SPECIALS)
            # untouched specials stay in place
            assert view.input_ids[0] == CLS_ID
            assert np.all(view.input_ids[-3:] == PAD_ID)

    def test_targets_are_originals(self):
        rng = np.random.default_rng(2)
        ids = encoded(12, rng=rng)
        view = mask_sequence(ids, 0.5, rng, 50)
        np.testing.assert_array_equal(view.targets, np.asarray(ids)[view.positions])

    def test_selection_rate(self):
        # >= 100,000 eligible positions at p=0.15 -> fraction within 0.005.
        rng = np.random.default_rng(3)
        total = selected = 0
        while total < 100000:
            ids = encoded(60, rng=rng)
            view = mask_sequence(ids, 0.15, rng, 50)
            total += 60
            selected += view.num_masked
        assert abs(selected / total - 0.15) <= 0.005

    def test_substitution_split(self):
        # conditional 80/10/10 split within 2 points over >= 10,000 selections
        rng = np.random.default_rng(4)
        n_mask = n_rand = n_keep = 0
        while n_mask + n_rand + n_keep < 10000:
            ids = encoded(60, rng=rng)
            view = mask_sequence(ids, 0.5, rng, 50)
            orig = np.asarray(ids)[view.positions]
            new = view.input_ids[view.positions]
            n_mask += int((new == MASK_ID).sum())
            same = new == orig
            n_keep += int(same.sum())
            n_rand += int((~same & (new != MASK_ID)).sum())
        total = n_mask + n_rand + n_keep
        assert abs(n_mask / total - 0.80) <= 0.02
        assert abs(n_rand / total - 0.10) <= 0.02
        assert abs(n_keep / total - 0.10) <= 0.02

    def test_random_substitutions_avoid_specials(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            ids = encoded(20, rng=rng)
            view = mask_sequence(ids, 0.9, rng, 50)
            assert np.all(view.input_ids[view.positions] != PAD_ID)
            assert np.all(view.input_ids[view.positions] != CLS_ID)
            assert np.all(view.input_ids[view.positions] != SEP_ID)

    def test_invalid_probability(self):
        with pytest.raises(ContractError):
            mask_sequence([2, 7, 3], 1.0, np.random.default_rng(0), 50)


class TestMaskBatch:
    def test_batch_applies_per_sequence(self):
        rng = np.random.default_rng(6)
        batch = [encoded(10, rng=rng) for _ in range(8)]
        views = mask_batch(batch, 0.3, rng, 50)
        assert len(views) == len(batch)
        for ids, view in zip(batch, views):
            assert len(view.input_ids) == len(ids)

    def test_view_position_bounds_checked(self):
        with pytest.raises(ContractError):
            MaskedView(np.array([2, 7, 3]), np.array([5]), np.array([7]))
