from fractions import Fraction

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from tstrojan.data import LabeledSeries, SeriesDataset
from tstrojan.defense import (
    DefenseConfig,
    IsolationResult,
    _clip_global_norm,
    alpha_schedule,
    isolate,
    run_defense,
    score_samples,
    unlearn,
    write_isolation_csv,
)
from tstrojan.errors import DefenseError, InvalidArgument
from tstrojan.models import build_model
from tstrojan.triggers import TriggerSpec, apply_trigger

from conftest import make_dataset


def small_model(seed=0, input_length=32):
    return build_model("inception_time", num_classes=2,
                       input_length=input_length, seed=seed,
                       branch_filters=4, depth=2)


def flat_dataset(n, length=8, seed=0):
    rng = np.random.default_rng(seed)
    samples = [
        LabeledSeries(values=rng.standard_normal(length), label=i % 2)
        for i in range(n)
    ]
    return SeriesDataset(samples=samples, num_classes=2,
                         series_length=length, name="flat")


class TestConfig:
    @pytest.mark.parametrize("bad", [
        {"r_percent": 0.0},
        {"r_percent": 100.0},
        {"r_percent": -5.0},
        {"alpha_start": 1.0, "alpha_end": 10.0},
        {"alpha_end": 0.0},
        {"epochs": 0},
        {"learning_rate": 0.0},
        {"toxic_grad_clip": 0.0},
        {"batch_size": 0},
    ])
    def test_rejects(self, bad):
        with pytest.raises(InvalidArgument):
            DefenseConfig(**bad)

    def test_probe_layers_tupled(self):
        cfg = DefenseConfig(probe_layers=["a", "b"])
        assert cfg.probe_layers == ("a", "b")

    def test_dict_round_trip(self):
        cfg = DefenseConfig(r_percent=7.5, probe_layers=("x",), seed=2)
        assert DefenseConfig.from_dict(cfg.to_dict()) == cfg

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(InvalidArgument):
            DefenseConfig.from_dict({"r": 5.0})


class TestAlphaSchedule:
    def test_endpoints_and_midpoint(self):
        cfg = DefenseConfig()
        assert alpha_schedule(cfg, 0) == 10.0
        assert alpha_schedule(cfg, 19) == 1.0
        assert alpha_schedule(cfg, 9) == pytest.approx(10.0 - 9.0 * 9 / 19, abs=1e-12)

    def test_single_epoch_uses_start(self):
        cfg = DefenseConfig(epochs=1)
        assert alpha_schedule(cfg, 0) == 10.0

    def test_monotone_nonincreasing(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            end = float(rng.uniform(0.1, 5.0))
            start = end + float(rng.uniform(0.0, 10.0))
            epochs = int(rng.integers(1, 40))
            cfg = DefenseConfig(alpha_start=start, alpha_end=end, epochs=epochs)
            values = [alpha_schedule(cfg, e) for e in range(epochs)]
            assert values[0] == start
            if epochs > 1:
                assert values[-1] == pytest.approx(end, abs=1e-12)
            assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))


class TestScoring:
    def test_matches_channel_norm_aggregation(self):
        m = small_model()
        d = make_dataset(9, 32, seed=4)
        scores = score_samples(m, d)
        norms = m.channel_norms(d.values_matrix(np.float32))
        expect = np.zeros(len(d))
        for per_channel in norms.values():
            expect += np.linalg.norm(per_channel.astype(np.float64), axis=-1)
        np.testing.assert_allclose(scores, expect, rtol=1e-12)

    def test_batching_does_not_change_scores(self):
        m = small_model()
        d = make_dataset(70, 32, seed=5)
        scores = score_samples(m, d)
        per_sample = np.array([
            score_samples(m, d.subset([i]))[0] for i in range(len(d))
        ])
        # Batch shape reorders float32 reductions; only ulp-level drift
        # is acceptable.
        np.testing.assert_allclose(scores, per_sample, rtol=1e-5)

    def test_duplicate_samples_score_equal(self):
        m = small_model()
        d = make_dataset(4, 32, seed=6)
        twice = SeriesDataset(samples=d.samples + d.samples, num_classes=2,
                              series_length=32, name="twice")
        scores = score_samples(m, twice)
        np.testing.assert_allclose(scores[:4], scores[4:], rtol=1e-12)

    def test_zeroed_model_scores_zero(self):
        m = small_model()
        with torch.no_grad():
            for p in m.net.parameters():
                p.zero_()
        d = make_dataset(5, 32, seed=7)
        scores = score_samples(m, d)
        np.testing.assert_array_equal(scores, np.zeros(5))

    def test_explicit_probe_layers(self):
        m = small_model()
        d = make_dataset(3, 32, seed=8)
        one_layer = score_samples(m, d, probe_layers=[m.feature_layer_ids[-1]])
        norms = m.channel_norms(d.values_matrix(np.float32),
                                [m.feature_layer_ids[-1]])
        expect = np.linalg.norm(
            next(iter(norms.values())).astype(np.float64), axis=-1
        )
        np.testing.assert_allclose(one_layer, expect, rtol=1e-12)


class TestIsolation:
    def test_basic_count(self):
        d = flat_dataset(100)
        iso = isolate(np.arange(100, dtype=float), d, 5.0)
        assert len(iso.toxic) == 5
        assert len(iso.clean) == 95
        np.testing.assert_array_equal(iso.toxic_indices, [95, 96, 97, 98, 99])

    def test_known_membership(self):
        d = flat_dataset(6)
        scores = np.array([0.1, 9.0, 3.0, 7.0, 0.2, 0.3])
        iso = isolate(scores, d, 33.0)
        np.testing.assert_array_equal(iso.toxic_indices, [1, 3])
        np.testing.assert_array_equal(iso.clean_indices, [0, 2, 4, 5])
        assert [s.values[0] for s in iso.toxic.samples] == [
            d.samples[1].values[0], d.samples[3].values[0]
        ]

    def test_tie_break_by_index(self):
        d = flat_dataset(4)
        iso = isolate(np.array([5.0, 9.0, 9.0, 1.0]), d, 50.0)
        np.testing.assert_array_equal(iso.toxic_indices, [1, 2])
        iso = isolate(np.array([9.0, 5.0, 9.0, 1.0]), d, 25.0)
        np.testing.assert_array_equal(iso.toxic_indices, [0])

    def test_all_ties_take_leading_indices(self):
        d = flat_dataset(40)
        iso = isolate(np.ones(40), d, 10.0)
        np.testing.assert_array_equal(iso.toxic_indices, [0, 1, 2, 3])

    def test_count_matches_exact_arithmetic(self):
        import math
        for r, n in [(5.0, 100), (5.0, 101), (0.1, 3000), (10.0, 110),
                     (33.34, 9), (50.0, 7), (99.0, 3), (2.5, 40), (5.0, 19)]:
            d = flat_dataset(n, length=4)
            iso = isolate(np.arange(n, dtype=float), d, r)
            exact = Fraction(str(r)) * n / 100
            expect = min(n, math.ceil(exact))
            assert len(iso.toxic) == expect, (r, n)

    def test_partition_properties(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            n = int(rng.integers(1, 60))
            r = float(rng.uniform(0.5, 99.5))
            scores = rng.standard_normal(n)
            d = flat_dataset(n, length=4, seed=int(rng.integers(1000)))
            iso = isolate(scores, d, r)
            both = np.concatenate([iso.toxic_indices, iso.clean_indices])
            np.testing.assert_array_equal(np.sort(both), np.arange(n))
            assert len(iso.toxic) >= 1
            if len(iso.clean):
                assert scores[iso.toxic_indices].min() >= scores[iso.clean_indices].max()

    def test_validation(self):
        d = flat_dataset(4)
        with pytest.raises(InvalidArgument):
            isolate(np.ones(3), d, 5.0)
        with pytest.raises(InvalidArgument):
            isolate(np.ones(4), d, 0.0)
        with pytest.raises(InvalidArgument):
            isolate(np.ones(4), d, 100.0)
        empty = SeriesDataset(samples=[], num_classes=2, series_length=4)
        with pytest.raises(InvalidArgument):
            isolate(np.empty(0), empty, 5.0)

    def test_csv_contents(self, tmp_path):
        trigger = TriggerSpec(kind="fixed_patch", patch_len=2,
                              position="end", amplitude=1.0)
        base = flat_dataset(4)
        samples = list(base.samples)
        samples[2] = apply_trigger(samples[2], trigger)
        d = SeriesDataset(samples=samples, num_classes=2,
                          series_length=base.series_length, name="mixed")
        iso = isolate(np.array([1.0, 4.0, 2.0, 3.0]), d, 30.0)
        path = tmp_path / "iso.csv"
        write_isolation_csv(iso, d, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "index,score,partition,provenance"
        assert len(lines) == 5
        fields = [ln.split(",") for ln in lines[1:]]
        assert [f[0] for f in fields] == ["0", "1", "2", "3"]
        assert [f[2] for f in fields] == ["clean", "toxic", "clean", "toxic"]
        assert fields[2][3] == "triggered"
        assert fields[0][3] == "clean"
        assert fields[1][1] == "4.00000000e+00"


class TestClipping:
    def test_above_threshold_rescaled(self):
        grads = (torch.tensor([3.0]), torch.tensor([4.0]))
        out = _clip_global_norm(grads, 1.0)
        total = torch.sqrt(sum((g * g).sum() for g in out))
        assert total.item() == pytest.approx(1.0, abs=1e-6)
        assert out[0].item() == pytest.approx(0.6, abs=1e-6)
        assert out[1].item() == pytest.approx(0.8, abs=1e-6)

    def test_below_threshold_untouched(self):
        grads = (torch.tensor([3.0]), torch.tensor([4.0]))
        out = _clip_global_norm(grads, 6.0)
        assert out is grads


class TestUnlearn:
    def _iso_all_clean(self, d):
        n = len(d)
        return IsolationResult(
            toxic=d.subset([]),
            clean=d,
            scores=np.zeros(n),
            toxic_indices=np.array([], dtype=np.int64),
            clean_indices=np.arange(n),
        )

    def test_empty_clean_returns_untrained(self):
        m = small_model()
        m.set_bn_frozen(True)
        d = make_dataset(4, 32, seed=9)
        iso = IsolationResult(
            toxic=d,
            clean=d.subset([]),
            scores=np.zeros(4),
            toxic_indices=np.arange(4),
            clean_indices=np.array([], dtype=np.int64),
        )
        out = unlearn(m, iso, DefenseConfig(epochs=2))
        assert not out.bn_frozen
        for k, v in m.net.state_dict().items():
            assert torch.equal(v, out.net.state_dict()[k])

    def test_empty_toxic_equals_plain_fine_tune(self):
        m = small_model()
        d = make_dataset(10, 32, seed=10)
        cfg = DefenseConfig(epochs=3, batch_size=4, seed=11)
        out = unlearn(m, self._iso_all_clean(d), cfg)

        replica = m.clone()
        replica.set_bn_frozen(False)
        x = torch.as_tensor(d.values_matrix(np.float32))
        y = torch.as_tensor(d.labels_array())
        opt = torch.optim.Adam(replica.trainable_parameters(), lr=cfg.learning_rate)
        torch.manual_seed(cfg.seed)
        rng = np.random.default_rng(cfg.seed)
        replica.set_training(True)
        for _ in range(cfg.epochs):
            perm = rng.permutation(len(d))
            for lo in range(0, len(d), cfg.batch_size):
                idx = torch.as_tensor(perm[lo : lo + cfg.batch_size])
                loss = F.cross_entropy(replica.net(x[idx].unsqueeze(1)), y[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
        replica.set_training(False)

        for k, v in out.net.state_dict().items():
            assert torch.equal(v, replica.net.state_dict()[k]), k

    def test_defender_unfreezes_bn(self):
        m = small_model()
        m.set_bn_frozen(True)
        d = make_dataset(8, 32, seed=12)
        iso = run_defense(m, d, DefenseConfig(epochs=1, r_percent=25.0))[1]
        out = unlearn(m, iso, DefenseConfig(epochs=2))
        assert not out.bn_frozen
        before = m.bn_statistics()
        after = out.bn_statistics()
        assert any(not torch.equal(before[k], after[k]) for k in before)
        assert m.bn_frozen

    def test_deterministic(self):
        m = small_model()
        d = make_dataset(8, 32, seed=13)
        cfg = DefenseConfig(epochs=2, r_percent=20.0)
        a, iso_a = run_defense(m, d, cfg)
        b, iso_b = run_defense(m, d, cfg)
        np.testing.assert_array_equal(iso_a.toxic_indices, iso_b.toxic_indices)
        for k, v in a.net.state_dict().items():
            assert torch.equal(v, b.net.state_dict()[k])

    def test_divergence_raises(self):
        m = small_model()
        d = make_dataset(12, 32, seed=14)
        cfg = DefenseConfig(epochs=3, r_percent=20.0, learning_rate=1e25,
                            batch_size=4)
        with pytest.raises(DefenseError):
            run_defense(m, d, cfg)

    def test_toxic_batches_cycle(self):
        m = small_model()
        d = make_dataset(12, 32, seed=15)
        iso = isolate(score_samples(m, d), d, 10.0)
        assert len(iso.toxic) == 2
        out = unlearn(m, iso, DefenseConfig(epochs=1, batch_size=4))
        assert any(
            not torch.equal(a, b)
            for a, b in zip(m.net.state_dict().values(), out.net.state_dict().values())
        )


class TestRunDefense:
    def test_composition(self):
        m = small_model()
        d = make_dataset(10, 32, seed=16)
        cfg = DefenseConfig(epochs=1, r_percent=20.0)
        sanitized, iso = run_defense(m, d, cfg)
        direct = isolate(score_samples(m, d, cfg.probe_layers), d, cfg.r_percent)
        np.testing.assert_array_equal(iso.toxic_indices, direct.toxic_indices)
        np.testing.assert_array_equal(iso.scores, direct.scores)
        again = unlearn(m, direct, cfg)
        for k, v in sanitized.net.state_dict().items():
            assert torch.equal(v, again.net.state_dict()[k])
