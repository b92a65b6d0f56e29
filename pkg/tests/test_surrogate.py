import numpy as np
import pytest
import torch

from fusemetrics import metrics as M
from fusemetrics.errors import DimensionMismatchError, EmptyDatasetError, \
    TooSmallError
from fusemetrics.serialize import read_header
from fusemetrics.surrogate import FEATURE_CHANNELS, SceneSample, \
    SURROGATE_MAGIC, SurrogateEvaluator, features, prepare_training_data
from fusemetrics.synth import SceneSpec, gen_fusions, gen_pair


@pytest.fixture(scope="module")
def tiny_samples():
    rng = np.random.default_rng(77)
    out = []
    for i in range(12):
        ir, vis = gen_pair(SceneSpec(seed=7100 + i, size=(32, 32)))
        fused = gen_fusions(ir, vis, seed=i)["average"]
        ir_hat = np.clip(fused * 0.8, 0, 1)
        vis_hat = np.clip(fused * 1.1, 0, 1)
        out.append(SceneSample(f"t{i}", ir, vis, ir_hat, vis_hat,
                               float(rng.random())))
    return out


class TestFeatures:
    def test_channel_count_fixed(self, rng):
        for shape in ((16, 16), (33, 47), (64, 64)):
            assert features(rng.random(shape)).shape == (FEATURE_CHANNELS,
                                                         *shape)

    def test_constant_image_channels(self):
        st = features(np.full((24, 24), 0.45))
        # gx, gy, laplacian, four gabors are all derivative-like
        for idx in (3, 4, 5, 6, 7, 8, 9):
            assert np.abs(st[idx]).max() < 1e-12
        assert np.allclose(st[10], 0.45, atol=1e-6)   # local mean
        assert np.abs(st[11]).max() < 1e-5            # local std

    def test_matched_gabor_dominates(self):
        xx = np.arange(64)
        img = np.tile(0.5 + 0.4 * np.sin(2 * np.pi * xx / 4.0), (64, 1))
        st = features(img)
        responses = [float(np.abs(st[6 + i]).mean()) for i in range(4)]
        assert responses[0] > 2 * max(responses[1:])

    def test_too_small(self, rng):
        with pytest.raises(TooSmallError):
            features(rng.random((8, 8)))

    def test_all_finite(self, rng):
        assert np.isfinite(features(rng.random((20, 28)))).all()


class TestForward:
    def test_output_length(self, rng):
        ev = SurrogateEvaluator(seed=0)
        out = ev.predict_pair("ir", rng.random((16, 16)),
                              rng.random((16, 16)))
        assert out.shape == (8,)

    def test_deterministic(self, rng):
        a, c = rng.random((16, 16)), rng.random((16, 16))
        x = SurrogateEvaluator(seed=2).predict_pair("vis", a, c)
        y = SurrogateEvaluator(seed=2).predict_pair("vis", a, c)
        assert np.array_equal(x, y)

    def test_dim_mismatch(self, rng):
        with pytest.raises(DimensionMismatchError):
            SurrogateEvaluator(seed=0).predict_pair(
                "ir", rng.random((16, 16)), rng.random((16, 18)))

    def test_env_strictly_inside_unit_interval(self, rng):
        ev = SurrogateEvaluator(seed=1)
        for _ in range(5):
            v = ev.predict_env(rng.random((16, 16)))
            assert 0.0 < v < 1.0


class TestLoss:
    def test_nonnegative(self, rng):
        ev = SurrogateEvaluator(seed=0)
        a, c = rng.random((16, 16)), rng.random((16, 16))
        val, grads = ev.loss_total(
            [("ir", a, c, "positive", np.zeros(8))], [(a, 0.5)])
        assert val >= 0.0
        assert len(grads) == 16

    def test_zero_when_predictions_equal_targets(self, rng):
        ev = SurrogateEvaluator(seed=0)
        a, c = rng.random((16, 16)), rng.random((16, 16))
        target = ev.predict_pair("ir", a, c)
        env_t = ev.predict_env(a)
        val, _ = ev.loss_total([("ir", a, c, "positive", target)],
                               [(a, env_t)])
        assert val == pytest.approx(0.0, abs=1e-10)

    def test_gradients_match_finite_differences(self, rng):
        # double precision makes the h=1e-4 central difference clean
        import oracles
        ev = SurrogateEvaluator(seed=0)
        ev._init_nets()
        for net in ev._nets():
            net.double()
        a, c = rng.random((16, 16)), rng.random((16, 16))
        b2, c2 = rng.random((16, 16)), rng.random((16, 16))
        msamples = [("ir", a, c, "positive", rng.random(8)),
                    ("vis", b2, c2, "negative", rng.random(8))]
        esamples = [(a, 0.3)]
        checked, worst = oracles.finite_difference_gradcheck(
            ev, msamples, esamples, n_params=50, seed=5)
        assert checked >= 50
        assert worst < 1e-3

    def test_empty_batch_rejected(self):
        with pytest.raises(EmptyDatasetError):
            SurrogateEvaluator(seed=0).loss_total([], [])

    def test_metric_only_batch(self, rng):
        ev = SurrogateEvaluator(seed=0)
        a, c = rng.random((16, 16)), rng.random((16, 16))
        val, _ = ev.loss_total([("ir", a, c, "positive", np.zeros(8))], [])
        assert np.isfinite(val) and val >= 0.0


class TestFit:
    def test_zero_learning_rate_keeps_params(self, tiny_samples):
        ev = SurrogateEvaluator(learning_rate=0.0, epochs=1, seed=3)
        ev._init_nets()
        before = [p.clone() for _, p in ev.named_parameter_tensors()]
        ev.fit(tiny_samples)
        after = [p for _, p in ev.named_parameter_tensors()]
        assert all(torch.equal(a, b) for a, b in zip(before, after))

    def test_empty_dataset(self):
        with pytest.raises(EmptyDatasetError):
            SurrogateEvaluator().fit([])

    def test_loss_curve_rows_and_finiteness(self, tiny_samples):
        ev = SurrogateEvaluator(epochs=3, seed=3).fit(tiny_samples)
        assert len(ev.loss_curve_) == 3
        for total, l_ir, l_vis, l_env in ev.loss_curve_:
            assert np.isfinite([total, l_ir, l_vis, l_env]).all()
            assert total == pytest.approx(l_ir + l_vis + l_env, rel=1e-6)

    def test_deterministic_refit(self, tiny_samples):
        a = SurrogateEvaluator(epochs=2, seed=9).fit(tiny_samples)
        b = SurrogateEvaluator(epochs=2, seed=9).fit(tiny_samples)
        assert all(torch.equal(x, y) for (_, x), (_, y) in
                   zip(a.named_parameter_tensors(),
                       b.named_parameter_tensors()))
        assert a.loss_curve_ == b.loss_curve_


class TestPipeline:
    def test_predict_adjusted_composes_exactly(self, tiny_samples, rng):
        from fusemetrics.decompose import FusionDecomposer
        ev = SurrogateEvaluator(epochs=1, seed=4).fit(tiny_samples)
        dec = FusionDecomposer(seed=0)
        ir, vis = gen_pair(SceneSpec(seed=8000, size=(32, 32)))
        triple = M.FusionTriple(ir=ir, vis=vis, fused=0.5 * (ir + vis))
        out = ev.predict_adjusted(triple, dec)
        assert set(out) == set(M.FULL_REFERENCE_METRICS)
        for m, a in out.items():
            assert a.q_star == a.q_ir + a.q_vis - a.env * a.delta
            assert a.delta == a.q_vis - a.q_ir
            assert 0.0 < a.env < 1.0

    def test_env_override(self, tiny_samples):
        from fusemetrics.decompose import FusionDecomposer
        ev = SurrogateEvaluator(epochs=1, seed=4).fit(tiny_samples)
        dec = FusionDecomposer(seed=0)
        ir, vis = gen_pair(SceneSpec(seed=8001, size=(32, 32)))
        triple = M.FusionTriple(ir=ir, vis=vis, fused=0.5 * (ir + vis))
        out = ev.predict_adjusted(triple, dec, env_override=0.25)
        assert all(a.env == 0.25 for a in out.values())

    def test_untrained_predict_adjusted_rejected(self, rng):
        from fusemetrics.decompose import FusionDecomposer
        ev = SurrogateEvaluator(seed=0)
        ir, vis = gen_pair(SceneSpec(seed=8002, size=(32, 32)))
        triple = M.FusionTriple(ir=ir, vis=vis, fused=vis)
        with pytest.raises(ValueError):
            ev.predict_adjusted(triple, FusionDecomposer(seed=0))


class TestPersistence:
    def test_roundtrip(self, tmp_path, tiny_samples, rng):
        ev = SurrogateEvaluator(epochs=1, seed=8).fit(tiny_samples)
        path = tmp_path / "surrogate.evnt"
        ev.save(path)
        magic, version, count = read_header(path)
        assert magic == SURROGATE_MAGIC and version == 1 and count == 19
        loaded = SurrogateEvaluator.load(path)
        assert loaded.train_size_ == ev.train_size_
        a, c = rng.random((32, 32)), rng.random((32, 32))
        assert np.array_equal(ev.predict_pair("ir", a, c),
                              loaded.predict_pair("ir", a, c))


def test_prepare_training_data(tiny_dataset):
    from fusemetrics.decompose import FusionDecomposer
    samples = prepare_training_data(tiny_dataset, FusionDecomposer(seed=0),
                                    seed=1, env_source="file")
    assert len(samples) == 6
    for s in samples:
        assert 0.0 <= s.env_target <= 1.0
        assert s.ir_hat.shape == s.ir.shape
    again = prepare_training_data(tiny_dataset, FusionDecomposer(seed=0),
                                  seed=1, env_source="file")
    assert all(np.array_equal(a.ir_hat, b.ir_hat)
               for a, b in zip(samples, again))
    heur = prepare_training_data(tiny_dataset, FusionDecomposer(seed=0),
                                 seed=1, env_source="heuristic")
    assert len(heur) == 6
