import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from upure.spectral import dct2, region_energy
from upure.trigger import (
    PatchTrigger,
    PoisonConfig,
    RepetitiveTrigger,
    poison_count,
    poison_dataset,
)


class TestRepetitiveTrigger:
    def test_rows_only_unipolar(self):
        out = RepetitiveTrigger(axes="rows", polarity="unipolar").apply(np.zeros((4, 4)))
        np.testing.assert_array_equal(out[[0, 2], :, 0], 30.0)
        np.testing.assert_array_equal(out[[1, 3], :, 0], 0.0)

    def test_rows_only_bipolar_on_zeros(self):
        # the negative half clips away on a black image
        out = RepetitiveTrigger(axes="rows").apply(np.zeros((4, 4)))
        np.testing.assert_array_equal(out[[0, 2], :, 0], 30.0)
        np.testing.assert_array_equal(out[[1, 3], :, 0], 0.0)

    @pytest.mark.parametrize("polarity", ["bipolar", "unipolar"])
    def test_clips_at_range_max(self, polarity):
        out = RepetitiveTrigger(polarity=polarity).apply(np.full((8, 8, 3), 250.0))
        assert out.max() == 255.0
        assert np.all(out[0, 0] == 255.0)

    def test_default_is_checkerboard(self):
        pat = RepetitiveTrigger().pattern(4, 4)
        r, c = np.indices((4, 4))
        np.testing.assert_array_equal(pat, np.where((r + c) % 2 == 0, 30.0, -30.0))

    def test_unipolar_union(self):
        pat = RepetitiveTrigger(polarity="unipolar", line_width=1, gap=2).pattern(6, 6)
        r, c = np.indices((6, 6))
        np.testing.assert_array_equal(pat, np.where((r % 3 == 0) | (c % 3 == 0), 30.0, 0.0))

    def test_delta_is_high_frequency(self):
        delta = RepetitiveTrigger().pattern(32, 32)[:, :, np.newaxis]
        assert region_energy(dct2(delta), 16) >= 0.5

    def test_delta_is_image_independent(self, natural):
        trig = RepetitiveTrigger()
        images = np.clip(natural[:8], 30, 225)
        for x in images:
            delta = trig.apply(x) - x
            np.testing.assert_allclose(delta, np.repeat(trig.pattern(32, 32)[:, :, None], 3, 2), atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (6, 6, 3), elements=st.floats(0, 255)), st.permutations([0, 1, 2]))
    def test_commutes_with_channel_permutation(self, x, perm):
        trig = RepetitiveTrigger()
        np.testing.assert_array_equal(trig.apply(x[:, :, perm]), trig.apply(x)[:, :, perm])

    @pytest.mark.parametrize(
        "kwargs", [{"intensity": 0}, {"gap": 0}, {"axes": "diag"}, {"polarity": "xor"}]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            RepetitiveTrigger(**kwargs)

    def test_period_larger_than_image(self):
        with pytest.raises(ValueError):
            RepetitiveTrigger(line_width=3, gap=3).pattern(4, 4)


class TestPatchTrigger:
    def test_corner_patch_changes_16_pixels(self):
        out = PatchTrigger().apply(np.zeros((32, 32, 3)))
        assert np.all(np.count_nonzero(out, axis=(0, 1)) == 16)
        assert np.all(out[:4, :4] == 255.0)

    def test_matching_pattern_is_identity(self, rng):
        x = rng.uniform(0, 255, (10, 10, 3))
        trig = PatchTrigger(3, 3, pattern=x[2:5, 4:7], position=(2, 4))
        np.testing.assert_array_equal(trig.apply(x), x)

    def test_out_of_bounds(self):
        with pytest.raises(ValueError):
            PatchTrigger(position=(30, 0)).apply(np.zeros((32, 32, 3)))

    def test_random_position_uniform(self, rng):
        trig = PatchTrigger(2, 2, position="random")
        counts = np.zeros((3, 3), dtype=int)
        for _ in range(20000):
            counts[trig.resolve_position(4, 4, rng)] += 1
        assert stats.chisquare(counts.ravel()).pvalue > 0.01

    def test_random_needs_rng(self):
        with pytest.raises(ValueError):
            PatchTrigger(position="random").apply(np.zeros((8, 8, 1)))

    def test_delta_is_not_high_frequency(self):
        delta = PatchTrigger().apply(np.zeros((32, 32, 1)))
        assert region_energy(dct2(delta), 16) < 0.5


class TestPoisonDataset:
    @pytest.mark.parametrize(
        "rate,n,expected", [(0.002, 50000, 100), (0.5, 3, 2), (0.25, 2, 1), (0.1, 4, 0), (1.0, 7, 7)]
    )
    def test_count(self, rate, n, expected):
        assert poison_count(rate, n) == expected

    def test_full_rate_poisons_everything(self, natural):
        out, mask = poison_dataset(natural[:10], None, PoisonConfig(rate=1.0), RepetitiveTrigger())
        assert mask.all()
        assert not np.any(np.all(out == natural[:10], axis=(1, 2, 3)))

    def test_selection_deterministic(self, natural):
        cfg = PoisonConfig(rate=0.25, seed=4)
        a = poison_dataset(natural, None, cfg, RepetitiveTrigger())
        b = poison_dataset(natural, None, cfg, RepetitiveTrigger(), n_jobs=4)
        np.testing.assert_array_equal(a[1], b[1])
        assert a[0].tobytes() == b[0].tobytes()
        assert a[1].sum() == 16

    def test_unselected_untouched(self, natural):
        out, mask = poison_dataset(natural, None, PoisonConfig(rate=0.1), PatchTrigger())
        assert out[~mask].tobytes() == natural[~mask].tobytes()

    def test_target_class(self, natural):
        labels = np.arange(64) % 4
        out, mask = poison_dataset(natural, labels, PoisonConfig(rate=0.1, target_class=2), PatchTrigger())
        assert mask.sum() == 6
        assert np.all(labels[mask] == 2)

    def test_target_class_errors(self, natural):
        with pytest.raises(ValueError):
            poison_dataset(natural, np.zeros(64), PoisonConfig(target_class=3), PatchTrigger())
        with pytest.raises(ValueError):
            poison_dataset(natural, None, PoisonConfig(target_class=3), PatchTrigger())

    def test_zero_count_warns(self, natural):
        with pytest.warns(UserWarning):
            out, mask = poison_dataset(natural[:5], None, PoisonConfig(rate=0.01), PatchTrigger())
        assert not mask.any()
        np.testing.assert_array_equal(out, natural[:5])

    def test_random_patch_uses_per_image_stream(self, natural):
        cfg = PoisonConfig(rate=0.5, seed=2)
        trig = PatchTrigger(position="random")
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            a, _ = poison_dataset(natural, None, cfg, trig, n_jobs=1)
            b, _ = poison_dataset(natural, None, cfg, trig, n_jobs=3)
        assert a.tobytes() == b.tobytes()

    def test_rate_validation(self):
        with pytest.raises(ValueError):
            PoisonConfig(rate=0.0)
