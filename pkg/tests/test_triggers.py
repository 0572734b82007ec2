import numpy as np
import pytest

from tstrojan.data import LabeledSeries, Provenance, SeriesDataset
from tstrojan.errors import InvalidArgument
from tstrojan.triggers import (
    POWERLINE_WAVELENGTHS,
    TriggerSpec,
    apply_trigger,
    apply_values,
    default_patch_len,
    poison_dataset,
    poison_fraction,
)

from conftest import make_dataset


class TestSpecValidation:
    def test_unknown_kind(self):
        with pytest.raises(InvalidArgument):
            TriggerSpec(kind="glitch")

    def test_powerline_needs_wavelength(self):
        with pytest.raises(InvalidArgument):
            TriggerSpec(kind="powerline")

    def test_powerline_wavelength_whitelist(self):
        with pytest.raises(InvalidArgument):
            TriggerSpec(kind="powerline", wavelength=7)
        t = TriggerSpec(kind="powerline", wavelength=7, allow_custom_wavelength=True)
        assert t.wavelength == 7
        for w in POWERLINE_WAVELENGTHS:
            TriggerSpec(kind="powerline", wavelength=w)

    def test_patch_needs_patch_len(self):
        with pytest.raises(InvalidArgument):
            TriggerSpec(kind="fixed_patch")

    def test_patch_len_positive(self):
        with pytest.raises(InvalidArgument):
            TriggerSpec(kind="fixed_patch", patch_len=0)

    def test_bad_position_name(self):
        with pytest.raises(InvalidArgument):
            TriggerSpec(kind="fixed_patch", patch_len=3, position="middle")

    def test_default_patch_len(self):
        assert default_patch_len(512) == 51
        assert default_patch_len(100) == 10
        assert default_patch_len(5) == 1


class TestPatterns:
    def test_fixed_pattern_alternates(self):
        t = TriggerSpec(kind="fixed_patch", patch_len=5, amplitude=2.0)
        np.testing.assert_array_equal(t.pattern, [2.0, -2.0, 2.0, -2.0, 2.0])

    def test_random_pattern_frozen_by_seed(self):
        a = TriggerSpec(kind="random_patch", patch_len=8, seed=4)
        b = TriggerSpec(kind="random_patch", patch_len=8, seed=4)
        c = TriggerSpec(kind="random_patch", patch_len=8, seed=5)
        np.testing.assert_array_equal(a.pattern, b.pattern)
        assert not np.array_equal(a.pattern, c.pattern)

    def test_random_pattern_amplitude_scales(self):
        a = TriggerSpec(kind="random_patch", patch_len=8, seed=1, amplitude=1.0)
        b = TriggerSpec(kind="random_patch", patch_len=8, seed=1, amplitude=3.0)
        np.testing.assert_allclose(b.pattern, 3.0 * a.pattern)

    def test_powerline_has_no_pattern(self):
        assert TriggerSpec(kind="powerline", wavelength=10).pattern is None


class TestWindow:
    def test_named_positions(self):
        t = TriggerSpec(kind="fixed_patch", patch_len=4, position="start")
        assert t.window(10) == (0, 4)
        t = TriggerSpec(kind="fixed_patch", patch_len=4, position="center")
        assert t.window(10) == (3, 7)
        t = TriggerSpec(kind="fixed_patch", patch_len=4, position="end")
        assert t.window(10) == (6, 10)

    def test_integer_offset(self):
        t = TriggerSpec(kind="fixed_patch", patch_len=4, position=2)
        assert t.window(10) == (2, 6)

    def test_patch_longer_than_series(self):
        t = TriggerSpec(kind="fixed_patch", patch_len=11)
        with pytest.raises(InvalidArgument):
            t.window(10)

    def test_offset_out_of_bounds(self):
        t = TriggerSpec(kind="fixed_patch", patch_len=4, position=7)
        with pytest.raises(InvalidArgument):
            t.window(10)
        t = TriggerSpec(kind="fixed_patch", patch_len=4, position=-1)
        with pytest.raises(InvalidArgument):
            t.window(10)


class TestApply:
    def test_powerline_formula(self):
        t = TriggerSpec(kind="powerline", wavelength=10, amplitude=0.5)
        x = np.zeros(20)
        i = np.arange(20, dtype=np.float64)
        np.testing.assert_array_equal(apply_values(x, t),
                                      0.5 * np.sin(2.0 * np.pi * i / 10))

    def test_powerline_is_additive(self):
        t = TriggerSpec(kind="powerline", wavelength=5)
        x = np.random.default_rng(0).standard_normal(15)
        np.testing.assert_allclose(apply_values(x, t) - x,
                                   apply_values(np.zeros(15), t), atol=1e-15)

    def test_patch_replaces_window(self):
        t = TriggerSpec(kind="fixed_patch", patch_len=3, position="end", amplitude=1.0)
        x = np.ones(8)
        out = apply_values(x, t)
        np.testing.assert_array_equal(out[:5], np.ones(5))
        np.testing.assert_array_equal(out[5:], [1.0, -1.0, 1.0])

    def test_dtype_preserved(self):
        t = TriggerSpec(kind="fixed_patch", patch_len=2)
        for dtype in (np.float32, np.float64):
            out = apply_values(np.zeros(6, dtype=dtype), t)
            assert out.dtype == dtype

    def test_batch_matches_per_row(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((5, 12))
        for t in (TriggerSpec(kind="powerline", wavelength=5),
                  TriggerSpec(kind="fixed_patch", patch_len=3),
                  TriggerSpec(kind="random_patch", patch_len=3, seed=2)):
            batch = apply_values(x, t)
            rows = np.stack([apply_values(x[i], t) for i in range(5)])
            np.testing.assert_array_equal(batch, rows)

    def test_input_not_mutated(self):
        t = TriggerSpec(kind="fixed_patch", patch_len=2)
        x = np.ones(6)
        before = x.copy()
        apply_values(x, t)
        np.testing.assert_array_equal(x, before)

    def test_applying_twice_is_bitwise_stable(self):
        t = TriggerSpec(kind="random_patch", patch_len=4, seed=9)
        x = np.random.default_rng(1).standard_normal(10)
        np.testing.assert_array_equal(apply_values(x, t), apply_values(x, t))

    def test_apply_trigger_sets_provenance(self):
        t = TriggerSpec(kind="fixed_patch", patch_len=2)
        s = LabeledSeries(values=np.zeros(6), label=1)
        out = apply_trigger(s, t)
        assert out.label == 1
        assert out.provenance is Provenance.TRIGGERED
        assert len(out) == 6


class TestPoison:
    def test_poison_dataset_relabel(self):
        d = make_dataset(6, 16, seed=0)
        t = TriggerSpec(kind="fixed_patch", patch_len=2)
        bd = poison_dataset(d, t, target=1, relabel=True)
        assert all(s.label == 1 for s in bd.samples)
        assert all(s.provenance is Provenance.TRIGGERED for s in bd.samples)

    def test_poison_dataset_keep_labels(self):
        d = make_dataset(6, 16, seed=0)
        t = TriggerSpec(kind="fixed_patch", patch_len=2)
        bd = poison_dataset(d, t, target=1, relabel=False)
        assert [s.label for s in bd.samples] == [s.label for s in d.samples]

    def test_poison_dataset_target_out_of_range(self):
        d = make_dataset(4, 16, seed=0)
        t = TriggerSpec(kind="fixed_patch", patch_len=2)
        with pytest.raises(InvalidArgument):
            poison_dataset(d, t, target=2, relabel=True)

    def test_poison_fraction_counts_and_positions(self):
        d = make_dataset(20, 16, seed=0)
        t = TriggerSpec(kind="fixed_patch", patch_len=2)
        out = poison_fraction(d, t, target=0, fraction=0.25, seed=3)
        assert len(out) == 20
        triggered = [i for i, s in enumerate(out.samples)
                     if s.provenance is Provenance.TRIGGERED]
        assert len(triggered) == 5
        for i, s in enumerate(out.samples):
            if i in triggered:
                assert s.label == 0
            else:
                np.testing.assert_array_equal(s.values, d.samples[i].values)
                assert s.label == d.samples[i].label

    def test_poison_fraction_at_least_one(self):
        d = make_dataset(4, 16, seed=0)
        t = TriggerSpec(kind="fixed_patch", patch_len=2)
        out = poison_fraction(d, t, target=0, fraction=0.01, seed=0)
        hit = sum(s.provenance is Provenance.TRIGGERED for s in out.samples)
        assert hit == 1

    def test_poison_fraction_deterministic(self):
        d = make_dataset(10, 16, seed=0)
        t = TriggerSpec(kind="fixed_patch", patch_len=2)
        a = poison_fraction(d, t, 0, 0.3, seed=5)
        b = poison_fraction(d, t, 0, 0.3, seed=5)
        for sa, sb in zip(a.samples, b.samples):
            np.testing.assert_array_equal(sa.values, sb.values)
            assert sa.label == sb.label

    def test_poison_fraction_bounds(self):
        d = make_dataset(4, 16, seed=0)
        t = TriggerSpec(kind="fixed_patch", patch_len=2)
        for bad in (0.0, 1.0, -0.2):
            with pytest.raises(InvalidArgument):
                poison_fraction(d, t, 0, bad)


class TestSerialization:
    def test_round_trip_all_kinds(self):
        specs = [
            TriggerSpec(kind="powerline", wavelength=20, amplitude=0.7),
            TriggerSpec(kind="fixed_patch", patch_len=6, position="center"),
            TriggerSpec(kind="random_patch", patch_len=4, seed=11, position=1),
        ]
        for t in specs:
            t2 = TriggerSpec.from_dict(t.to_dict())
            assert t2 == t
            if t.pattern is not None:
                np.testing.assert_array_equal(t.pattern, t2.pattern)

    def test_unknown_field_rejected(self):
        with pytest.raises(InvalidArgument):
            TriggerSpec.from_dict({"kind": "powerline", "wavelength": 10, "x": 1})

    def test_dict_omits_irrelevant_fields(self):
        d = TriggerSpec(kind="powerline", wavelength=5).to_dict()
        assert "patch_len" not in d
        d = TriggerSpec(kind="fixed_patch", patch_len=3).to_dict()
        assert "wavelength" not in d
        assert "seed" not in d
