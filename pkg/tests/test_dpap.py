"""Dominant-patch amplitude perturbation: selection, mixing, locality, phase."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import topk_sort_oracle
from microface.data import ImageSample
from microface.dpap import (
    AugmentationConfig,
    DominanceScores,
    PatchGrid,
    augment,
    mix_amplitude,
    normalize_scaling,
    select_dominant,
)
from microface.errors import ContractError, ShapeError
from microface.fourier import amplitude_phase, dft2


def _image(seed, lo=0.0, hi=1.0, shape=(3, 16, 16)):
    return np.random.default_rng(seed).uniform(lo, hi, shape)


class TestPatchGrid:
    def test_roundtrip_bit_exact(self):
        grid = PatchGrid((3, 16, 16), 4)
        img = _image(0)
        patches = grid.decompose(img)
        assert patches.shape == (16, 3, 4, 4)
        assert grid.reassemble(patches).tobytes() == img.tobytes()

    def test_patch_content_matches_slicing(self):
        grid = PatchGrid((1, 8, 8), 4)
        img = np.arange(64, dtype=np.float64).reshape(1, 8, 8)
        patches = grid.decompose(img)
        np.testing.assert_array_equal(patches[1, 0], img[0, 0:4, 4:8])
        np.testing.assert_array_equal(patches[2, 0], img[0, 4:8, 0:4])

    def test_non_tiling_rejected(self):
        with pytest.raises(ShapeError):
            PatchGrid((3, 15, 16), 4)


class TestNormalizeScaling:
    def test_uniform_for_equal_scores(self):
        d = normalize_scaling(np.full(5, 0.7))
        np.testing.assert_allclose(d, 0.2, atol=1e-15)

    def test_hand_values(self):
        d = normalize_scaling(np.array([0.2, 0.9]))
        np.testing.assert_allclose(d, [0.33181, 0.66819], atol=1e-5)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(1)
        kappa = rng.uniform(0, 1, 7)
        perm = rng.permutation(7)
        np.testing.assert_allclose(normalize_scaling(kappa)[perm], normalize_scaling(kappa[perm]), atol=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            normalize_scaling(np.zeros(0))

    def test_dominance_scores_sum_to_one(self):
        scores = DominanceScores.from_raw(np.array([0.1, 0.5, 0.9]))
        assert abs(scores.normalized.sum() - 1.0) < 1e-12


class TestSelectDominant:
    def test_hand_case(self):
        assert select_dominant(np.array([0.1, 0.4, 0.2, 0.3]), 2).tolist() == [1, 3]

    def test_tie_break_toward_smaller_index(self):
        assert select_dominant(np.full(6, 0.25), 3).tolist() == [0, 1, 2]

    def test_matches_sort_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(1, 20))
            d = np.round(rng.uniform(0, 1, n), 1)  # coarse values force ties
            k = int(rng.integers(1, n + 1))
            np.testing.assert_array_equal(select_dominant(d, k), topk_sort_oracle(d, k))

    def test_k_out_of_range_rejected(self):
        with pytest.raises(ContractError):
            select_dominant(np.ones(4), 5)
        with pytest.raises(ContractError):
            select_dominant(np.ones(4), 0)

    def test_invariant_under_constant_shift(self):
        rng = np.random.default_rng(3)
        kappa = rng.uniform(0, 1, 9)
        for c in (-3.0, 0.4, 10.0):
            a = select_dominant(normalize_scaling(kappa), 4)
            b = select_dominant(normalize_scaling(kappa + c), 4)
            np.testing.assert_array_equal(a, b)


class TestMixAmplitude:
    def test_boundaries_and_midpoint(self):
        a = np.array([[4.0]])
        b = np.array([[2.0]])
        assert mix_amplitude(a, b, 1.0)[0, 0] == 4.0
        assert mix_amplitude(a, b, 0.0)[0, 0] == 2.0
        assert mix_amplitude(a, b, 0.5)[0, 0] == 3.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            mix_amplitude(np.ones((2, 2)), np.ones((3, 2)), 0.5)

    def test_lambda_out_of_range_rejected(self):
        with pytest.raises(ContractError):
            mix_amplitude(np.ones((2, 2)), np.ones((2, 2)), 1.5)

    def test_negative_amplitude_rejected(self):
        with pytest.raises(ContractError):
            mix_amplitude(-np.ones((2, 2)), np.ones((2, 2)), 0.5)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 1.0))
    def test_output_between_sources(self, lam):
        rng = np.random.default_rng(9)
        a, b = rng.uniform(0, 5, (3, 3)), rng.uniform(0, 5, (3, 3))
        out = mix_amplitude(a, b, lam)
        assert (out >= np.minimum(a, b) - 1e-12).all()
        assert (out <= np.maximum(a, b) + 1e-12).all()


class TestAugment:
    grid = PatchGrid((3, 16, 16), 4)

    def _kappa(self, hot):
        kappa = np.full(self.grid.n, 0.2)
        for i in hot:
            kappa[i] = 0.9
        return kappa

    def test_lambda_one_is_identity(self):
        sample = ImageSample(_image(10), 0, seed=5)
        donor = ImageSample(_image(11), 1)
        cfg = AugmentationConfig(top_k=3, alpha=1.0, seed=5)
        out = augment(sample, self._kappa([2, 7, 9]), cfg, donor, grid=self.grid, fixed_lambda=1.0)
        assert np.abs(out.pixels - sample.pixels).max() < 1e-5

    def test_k_equals_n_lambda_one_still_identity(self):
        sample = ImageSample(_image(12), 0, seed=6)
        donor = ImageSample(_image(13), 1)
        cfg = AugmentationConfig(top_k=self.grid.n, alpha=1.0, seed=6)
        out = augment(sample, self._kappa([0]), cfg, donor, grid=self.grid, fixed_lambda=1.0)
        assert np.abs(out.pixels - sample.pixels).max() < 1e-5

    def test_locality_outside_dominant_patches(self):
        sample = ImageSample(_image(14), 0, seed=7)
        donor = ImageSample(_image(15), 1)
        hot = [1, 5]
        cfg = AugmentationConfig(top_k=2, alpha=1.0, seed=7)
        out = augment(sample, self._kappa(hot), cfg, donor, grid=self.grid)
        before = self.grid.decompose(sample.pixels)
        after = self.grid.decompose(out.pixels)
        changed = [i for i in range(self.grid.n) if before[i].tobytes() != after[i].tobytes()]
        for i in range(self.grid.n):
            if i not in hot:
                assert before[i].tobytes() == after[i].tobytes()
        assert set(changed) <= set(hot) and changed  # something was perturbed

    def test_determinism(self):
        sample = ImageSample(_image(16), 0, seed=8)
        donor = ImageSample(_image(17), 1)
        cfg = AugmentationConfig(top_k=4, alpha=0.7, seed=8)
        kappa = self._kappa([0, 3, 11, 15])
        a = augment(sample, kappa, cfg, donor, grid=self.grid)
        b = augment(sample, kappa, cfg, donor, grid=self.grid)
        assert a.pixels.tobytes() == b.pixels.tobytes()

    def test_phase_preserved_and_amplitude_convex(self):
        # mid-range pixels keep the mixed patches inside [0, 1], so the clamp
        # never fires and the spectral properties hold exactly
        sample = ImageSample(_image(18, 0.35, 0.65), 0, seed=9)
        donor = ImageSample(_image(19, 0.35, 0.65), 1)
        hot = [6]
        cfg = AugmentationConfig(top_k=1, alpha=1.0, seed=9)
        out = augment(sample, self._kappa(hot), cfg, donor, grid=self.grid)
        assert ((out.pixels > 0.0) & (out.pixels < 1.0)).all(), "clamp fired; pick a different seed"

        rng = np.random.default_rng(9)
        before = self.grid.decompose(sample.pixels)
        after = self.grid.decompose(out.pixels)
        lam = rng.uniform(0.0, 1.0)
        dpi = int(rng.integers(self.grid.n))
        donor_patches = self.grid.decompose(donor.pixels)
        for ch in range(3):
            ap_orig = amplitude_phase(dft2(before[hot[0], ch]))
            ap_new = amplitude_phase(dft2(after[hot[0], ch]))
            mask = ap_new.amplitude > 1e-8
            dphi = np.arctan2(
                np.sin(ap_new.phase - ap_orig.phase), np.cos(ap_new.phase - ap_orig.phase)
            )
            assert np.abs(dphi[mask]).max() < 1e-6
            a_donor = amplitude_phase(dft2(donor_patches[dpi, ch])).amplitude
            lo = np.minimum(ap_orig.amplitude, a_donor) - 1e-8
            hi = np.maximum(ap_orig.amplitude, a_donor) + 1e-8
            assert (ap_new.amplitude >= lo).all() and (ap_new.amplitude <= hi).all()

    def test_k_larger_than_n_rejected(self):
        sample = ImageSample(_image(20), 0)
        with pytest.raises(ContractError):
            augment(sample, self._kappa([0]), AugmentationConfig(top_k=17), sample, grid=self.grid)

    def test_dimension_mismatch_rejected(self):
        sample = ImageSample(_image(21), 0)
        donor = ImageSample(_image(22, shape=(3, 8, 8)), 1)
        with pytest.raises(ShapeError):
            augment(sample, self._kappa([0]), AugmentationConfig(top_k=1), donor, grid=self.grid)

    def test_output_stays_in_unit_range(self):
        sample = ImageSample(_image(23, 0.0, 1.0), 0, seed=11)
        donor = ImageSample(_image(24, 0.0, 1.0), 1)
        cfg = AugmentationConfig(top_k=6, alpha=1.0, seed=11)
        out = augment(sample, self._kappa([0, 2, 4, 8, 10, 12]), cfg, donor, grid=self.grid)
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0
