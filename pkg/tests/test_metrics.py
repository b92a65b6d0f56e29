import math
import warnings

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from fusemetrics import metrics as M
from fusemetrics.errors import AllDegenerateError, DegenerateInputWarning, \
    DimensionMismatchError, TooSmallError

import oracles


def textured(rng, shape=(32, 32)):
    return rng.random(shape)


class TestPsnr:
    def test_identical_capped(self, random_pair):
        x, _ = random_pair
        assert M.psnr(x, x) == 100.0

    def test_forced_value(self):
        a = np.zeros((8, 8))
        b = np.full((8, 8), 0.5)
        assert M.psnr(a, b) == pytest.approx(10 * math.log10(4), abs=1e-9)

    def test_matches_naive(self, rng):
        a, b = rng.random((8, 8)), rng.random((8, 8))
        assert M.psnr(a, b) == pytest.approx(oracles.naive_psnr(a, b),
                                             abs=1e-9)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            M.psnr(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_monotone_under_noise(self, rng):
        x = rng.random((32, 32)) * 0.5 + 0.25
        noise = rng.standard_normal((32, 32))
        vals = []
        for amp in (0.01, 0.02, 0.04, 0.08, 0.16):
            y = np.clip(x + amp * noise, 0, 1)
            vals.append(M.psnr(x, y))
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestCc:
    def test_self_correlation(self, random_pair):
        x, _ = random_pair
        assert M.cc(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_positive_affine(self, random_pair):
        x, _ = random_pair
        assert M.cc(x, 0.5 * x + 0.1) == pytest.approx(1.0, abs=1e-12)

    def test_negative_affine(self, random_pair):
        x, _ = random_pair
        assert M.cc(x, 1.0 - x) == pytest.approx(-1.0, abs=1e-12)

    def test_constant_degenerate(self, random_pair):
        x, _ = random_pair
        with pytest.warns(DegenerateInputWarning):
            assert M.cc(x, np.full_like(x, 0.5)) == 0.0

    def test_matches_naive(self, rng):
        a, b = rng.random((8, 8)), rng.random((8, 8))
        assert M.cc(a, b) == pytest.approx(oracles.naive_cc(a, b), abs=1e-9)


class TestSsim:
    def test_identical(self, random_pair):
        x, _ = random_pair
        assert M.ssim(x, x) == pytest.approx(1.0, abs=1e-9)

    def test_constant_pair_closed_form(self):
        a = np.full((16, 16), 0.3)
        b = np.full((16, 16), 0.7)
        want = (2 * 0.3 * 0.7 + 1e-4) / (0.3 ** 2 + 0.7 ** 2 + 1e-4)
        assert M.ssim(a, b) == pytest.approx(want, abs=1e-12)

    def test_matches_naive(self, rng):
        a, b = rng.random((32, 32)), rng.random((32, 32))
        assert M.ssim(a, b) == pytest.approx(oracles.naive_ssim(a, b),
                                             abs=1e-6)

    def test_too_small(self):
        with pytest.raises(TooSmallError):
            M.ssim(np.zeros((10, 10)), np.zeros((10, 10)))

    def test_symmetry(self, rng):
        a, b = rng.random((24, 24)), rng.random((24, 24))
        assert M.ssim(a, b) == pytest.approx(M.ssim(b, a), abs=1e-9)


class TestVif:
    def test_identical(self, rng):
        x = rng.random((64, 64))
        assert M.vif(x, x) == pytest.approx(1.0, abs=1e-6)

    def test_blur_loses_information(self, rng):
        x = rng.random((64, 64))
        blurred = np.clip(gaussian_filter(x, 1.5), 0, 1)
        assert M.vif(x, blurred) < 1.0

    def test_matches_independent_oracle(self, rng):
        a, b = rng.random((64, 64)), rng.random((64, 64))
        got = M.vif(a, b)
        want = oracles.naive_vif(a, b)
        assert got == pytest.approx(want, rel=1e-4)

    def test_small_image_uses_fewer_scales(self, rng):
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert np.isfinite(M.vif(a, b))

    def test_too_small(self):
        with pytest.raises(TooSmallError):
            M.vif(np.zeros((8, 8)), np.zeros((8, 8)))


class TestQabf:
    def test_identity_transfer(self, rng):
        x = textured(rng)
        # the published sigmoid constants cap the perfect-transfer score
        # at about 0.9748, not 1.0
        assert M.qabf(x, x, x) > 0.97

    def test_constant_fused(self, rng):
        x = textured(rng)
        assert M.qabf(x, x, np.full_like(x, 0.5)) < 0.01

    def test_all_flat_degenerate(self):
        c = np.full((8, 8), 0.5)
        with pytest.warns(DegenerateInputWarning):
            assert M.qabf(c, c, c) == 0.0

    def test_matches_naive(self, rng):
        a, b, f = (rng.random((16, 16)) for _ in range(3))
        assert M.qabf(a, b, f) == pytest.approx(
            oracles.naive_qabf(a, b, f), abs=1e-9)

    def test_pairwise_identity(self, rng):
        x = textured(rng)
        assert M.qabf_pairwise(x, x) > 0.97

    def test_pairwise_constant_candidate(self, rng):
        x = textured(rng)
        assert M.qabf_pairwise(x, np.full_like(x, 0.5)) < 0.01

    def test_pairwise_matches_naive(self, rng):
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert M.qabf_pairwise(a, b) == pytest.approx(
            oracles.naive_qabf_pairwise(a, b), abs=1e-9)


class TestFmi:
    def test_self_information(self, rng):
        x = rng.random((32, 32))
        assert M.fmi(x, x, "pixel") == pytest.approx(1.0, abs=1e-12)

    def test_independent_noise_bounded_by_bias(self, rng):
        # the 64-cell joint histogram on 64 samples has a plug-in MI
        # bias of roughly (K-1)^2/(2 N ln 2) ~ 0.55 bits, so unrelated
        # noise scores ~0.22, not 0
        a, b = rng.random((256, 256)), rng.random((256, 256))
        for feature in ("pixel", "dct", "wavelet"):
            assert M.fmi(a, b, feature) < 0.3

    def test_related_beats_unrelated(self, rng):
        x = rng.random((64, 64))
        noisy = np.clip(x + 0.1 * rng.standard_normal(x.shape), 0, 1)
        other = rng.random((64, 64))
        assert M.fmi(x, noisy, "pixel") > M.fmi(x, other, "pixel")

    def test_single_window_hand_histogram(self):
        # 4 gray levels arranged so the joint distribution is known
        base = np.array([0.0, 0.3, 0.6, 0.9])
        a = np.tile(base, (8, 2))
        b = np.tile(base[::-1], (8, 2))
        got = M.fmi(a, b, "pixel")
        want = oracles.naive_fmi(a, b, "pixel")
        assert got == pytest.approx(want, abs=1e-9)
        # perfectly dependent 4-symbol streams: MI == H == 2 bits
        assert got == pytest.approx(1.0, abs=1e-12)

    def test_matches_naive_all_features(self, rng):
        a, b = rng.random((24, 24)), rng.random((24, 24))
        for feature in ("pixel", "dct", "wavelet"):
            assert M.fmi(a, b, feature) == pytest.approx(
                oracles.naive_fmi(a, b, feature), abs=1e-9)

    def test_all_degenerate(self):
        c = np.full((16, 16), 0.5)
        with pytest.raises(AllDegenerateError):
            M.fmi(c, c, "pixel")

    def test_symmetry(self, rng):
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert M.fmi(a, b) == pytest.approx(M.fmi(b, a), abs=1e-9)


class TestReferenceFree:
    def test_constant_all_zero(self):
        c = np.full((16, 16), 0.4)
        assert M.en(c) == 0.0
        assert M.sd(c) == pytest.approx(0.0, abs=1e-12)
        assert M.ei(c) == 0.0
        assert M.sf(c) == 0.0

    def test_uniform_entropy_is_eight_bits(self):
        img = (np.arange(256) / 255.0).reshape(16, 16)
        assert M.en(img) == pytest.approx(8.0, abs=1e-12)

    def test_match_naive(self, rng):
        img = rng.random((8, 8))
        assert M.en(img) == pytest.approx(oracles.naive_en(img), abs=1e-9)
        assert M.sd(img) == pytest.approx(oracles.naive_sd(img), abs=1e-9)
        assert M.ei(img) == pytest.approx(oracles.naive_ei(img), abs=1e-9)
        assert M.sf(img) == pytest.approx(oracles.naive_sf(img), abs=1e-9)

    def test_ei_needs_3x3(self):
        with pytest.raises(TooSmallError):
            M.ei(np.zeros((2, 8)))


class TestComposition:
    def test_identity_triple_ssim(self, rng):
        x = textured(rng)
        t = M.FusionTriple(ir=x, vis=x, fused=x)
        assert M.vanilla_fusion_score(t, "SSIM") == pytest.approx(2.0,
                                                                  abs=1e-9)

    def test_weight_annihilation(self, rng):
        ir, vis, f = (rng.random((32, 32)) for _ in range(3))
        t = M.FusionTriple(ir=ir, vis=vis, fused=f)
        got = M.vanilla_fusion_score(t, "PSNR", M.VanillaWeights(1.0, 0.0))
        assert got == pytest.approx(M.psnr(ir, f), abs=1e-12)

    def test_cc_compositional(self, rng):
        ir, vis, f = (rng.random((16, 16)) for _ in range(3))
        t = M.FusionTriple(ir=ir, vis=vis, fused=f)
        assert M.vanilla_fusion_score(t, "CC") == pytest.approx(
            M.cc(ir, f) + M.cc(vis, f), abs=1e-12)

    def test_rejects_reference_free(self, rng):
        x = textured(rng)
        t = M.FusionTriple(ir=x, vis=x, fused=x)
        with pytest.raises(ValueError):
            M.vanilla_fusion_score(t, "EN")

    def test_eval_all_identity_triple(self, rng):
        x = textured(rng)
        out = M.eval_all(M.FusionTriple(ir=x, vis=x, fused=x))
        assert out["SSIM"] == pytest.approx(2.0, abs=1e-9)
        assert out["CC"] == pytest.approx(2.0, abs=1e-9)
        assert out["PSNR"] == 200.0
        assert set(out) == set(M.ALL_METRICS)

    def test_eval_all_constant_triple(self):
        c = np.full((32, 32), 0.5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateInputWarning)
            out = M.eval_all(M.FusionTriple(ir=c, vis=c, fused=c))
        for metric in M.REFERENCE_FREE_METRICS:
            assert out[metric] == 0.0
        assert out["CC"] == 0.0
        # FMI cannot produce any window on constant input: entry absent
        assert "FMI_P" not in out

    def test_metric_enumeration(self):
        assert len(M.FULL_REFERENCE_METRICS) == 8
        assert len(M.REFERENCE_FREE_METRICS) == 4
        assert len(set(M.ALL_METRICS)) == 12


class TestWeights:
    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            M.VanillaWeights(-1.0, 1.0)

    def test_rejects_both_zero(self):
        with pytest.raises(ValueError):
            M.VanillaWeights(0.0, 0.0)


def test_score_ranges_on_random_pairs(rng):
    slack = 1e-9
    for _ in range(20):
        a, b = rng.random((32, 32)), rng.random((32, 32))
        assert -1.0 - slack <= M.cc(a, b) <= 1.0 + slack
        # SSIM's covariance factor goes negative for anti-correlated
        # windows, so independent noise can dip slightly below zero
        assert -1.0 - slack <= M.ssim(a, b) <= 1.0 + slack
        assert 0.0 - slack <= M.qabf(a, b, 0.5 * (a + b)) <= 1.0 + slack
        for feature in ("pixel", "dct", "wavelet"):
            assert 0.0 - slack <= M.fmi(a, b, feature) <= 1.0 + slack
        assert M.vif(a, b) >= 0.0
        assert 0.0 <= M.en(a) <= 8.0
        assert np.isfinite(M.psnr(a, b))
