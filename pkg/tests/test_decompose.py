import numpy as np
import pytest
import torch

from fusemetrics.decompose import FusionDecomposer, PROBE_MAGIC, \
    augment_for_zero_suppression, load_components, save_components
from fusemetrics.errors import DimensionMismatchError, EmptyDatasetError, \
    TooSmallError
from fusemetrics.serialize import read_header
from fusemetrics.synth import SceneSpec, gen_fusions, gen_pair


@pytest.fixture(scope="module")
def small_triples():
    out = []
    for i in range(60):
        ir, vis = gen_pair(SceneSpec(seed=9000 + i, size=(32, 32)))
        fused = gen_fusions(ir, vis, seed=i)["average"]
        out.append((ir, vis, fused))
    return out


class TestTransform:
    def test_shape_contract(self, rng):
        dec = FusionDecomposer(seed=0)
        ih, vh = dec.transform(rng.random((17, 23)))
        assert ih.shape == (17, 23) and vh.shape == (17, 23)

    def test_outputs_in_unit_interval(self, rng):
        dec = FusionDecomposer(seed=0)
        ih, vh = dec.transform(rng.random((16, 16)))
        for arr in (ih, vh):
            assert arr.min() > 0.0 and arr.max() < 1.0

    def test_deterministic(self, rng):
        img = rng.random((16, 16))
        a = FusionDecomposer(seed=3).transform(img)
        b = FusionDecomposer(seed=3).transform(img)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_too_small(self):
        with pytest.raises(TooSmallError):
            FusionDecomposer(seed=0).transform(np.zeros((4, 4)))

    def test_local_content_dependence(self, small_triples, rng):
        # 5 stacked 3x3 convolutions: receptive radius is 5 pixels, so a
        # localized edit must not disturb far-away outputs
        dec = FusionDecomposer(epochs=2, seed=0).fit(small_triples[:50])
        img = small_triples[0][2].copy()
        other = img.copy()
        other[16:18, 16:18] = 0.0
        a = dec.transform(img)
        b = dec.transform(other)
        for x, y in zip(a, b):
            diff = np.abs(x - y)
            assert diff[:10, :10].max() == 0.0
            assert diff[:, :10].max() == 0.0


class TestFit:
    def test_empty_dataset(self):
        with pytest.raises(EmptyDatasetError):
            FusionDecomposer().fit([])

    def test_mixed_shapes_rejected(self, rng):
        t1 = tuple(rng.random((32, 32)) for _ in range(3))
        t2 = tuple(rng.random((16, 16)) for _ in range(3))
        with pytest.raises(DimensionMismatchError):
            FusionDecomposer().fit([t1, t2])

    def test_zero_learning_rate_keeps_params(self, small_triples):
        dec = FusionDecomposer(learning_rate=0.0, epochs=1, seed=5)
        dec._init_net()
        before = [p.clone() for p in dec.net_.parameters()]
        dec.fit(small_triples[:50])
        after = list(dec.net_.parameters())
        assert all(torch.equal(a, b) for a, b in zip(before, after))

    def test_loss_nonnegative_and_finite(self, small_triples):
        dec = FusionDecomposer(epochs=3, seed=1).fit(small_triples[:50])
        assert all(v >= 0.0 and np.isfinite(v) for v in dec.loss_curve_)

    def test_training_reduces_loss(self, small_triples):
        dec = FusionDecomposer(epochs=6, seed=2).fit(small_triples)
        assert dec.loss_curve_[-1] < dec.loss_curve_[0]

    def test_deterministic_refit(self, small_triples):
        a = FusionDecomposer(epochs=2, seed=4).fit(small_triples[:50])
        b = FusionDecomposer(epochs=2, seed=4).fit(small_triples[:50])
        assert all(torch.equal(x, y) for x, y in
                   zip(a.net_.parameters(), b.net_.parameters()))


class TestPersistence:
    def test_save_load_roundtrip(self, tmp_path, small_triples, rng):
        dec = FusionDecomposer(epochs=2, seed=6).fit(small_triples[:50])
        path = tmp_path / "probe.iprb"
        dec.save(path)
        magic, version, count = read_header(path)
        assert magic == PROBE_MAGIC and version == 1 and count == 14
        loaded = FusionDecomposer.load(path)
        img = rng.random((32, 32))
        a = dec.transform(img)
        b = loaded.transform(img)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_parameter_budget(self):
        dec = FusionDecomposer(seed=0)
        assert dec.n_parameters * 4 + 16 <= 40 * 1024

    def test_components_roundtrip(self, tmp_path, rng):
        pair = (np.round(rng.random((24, 24)) * 255) / 255,
                np.round(rng.random((24, 24)) * 255) / 255)
        save_components(tmp_path, "sc1", "avg", pair)
        back = load_components(tmp_path, "sc1", "avg",
                               expected_shape=(24, 24))
        assert np.allclose(back[0], pair[0], atol=1e-12)
        assert np.allclose(back[1], pair[1], atol=1e-12)

    def test_missing_component_names_path(self, tmp_path):
        with pytest.raises(OSError, match="missing_method"):
            load_components(tmp_path, "sc1", "missing_method")

    def test_dim_mismatch(self, tmp_path, rng):
        pair = (rng.random((24, 24)), rng.random((24, 24)))
        save_components(tmp_path, "sc2", "avg", pair)
        with pytest.raises(DimensionMismatchError):
            load_components(tmp_path, "sc2", "avg", expected_shape=(32, 32))


def test_augmentation_adds_dark_and_zero(small_triples):
    out = augment_for_zero_suppression(small_triples[:20])
    assert len(out) > 20
    assert any(np.all(np.asarray(t[2]) == 0.0) for t in out)
