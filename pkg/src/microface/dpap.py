"""Dominant-patch amplitude perturbation.

The token-gating module scores every image patch; the top-K scorers are the
patches the model currently leans on hardest.  For each of those patches we
replace the Fourier amplitude spectrum with a random convex mix against a
donor patch while keeping the phase spectrum (the structural content)
untouched, then map back to pixel space.  Channels are transformed
independently.  Everything is driven by an explicit per-sample seed, so the
augmentation is a pure function of its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ImageSample
from .errors import ContractError, ShapeError
from .fourier import AmplitudePhase, amplitude_phase, dft2, idft2, reconstruct


@dataclass(frozen=True)
class AugmentationConfig:
    """Knobs for one augmentation call: patch count K, mix bound, RNG seed."""

    top_k: int
    alpha: float = 1.0
    seed: int = 0

    def validate(self, n: int) -> None:
        if not 1 <= self.top_k <= n:
            raise ContractError(f"top_k must be in [1, {n}], got {self.top_k}")
        if not 0.0 < self.alpha <= 1.0:
            raise ContractError(f"alpha must be in (0, 1], got {self.alpha}")


class PatchGrid:
    """Exact tiling of a (C, H, W) image into n non-overlapping p x p patches.

    ``reassemble(decompose(img))`` returns the image bit-for-bit.
    """

    def __init__(self, image_shape: tuple[int, int, int], patch: int):
        c, h, w = image_shape
        if patch < 1 or h % patch or w % patch:
            raise ShapeError(f"image {h}x{w} does not tile into {patch}x{patch} patches")
        self.channels = c
        self.height = h
        self.width = w
        self.patch = patch
        self.grid_h = h // patch
        self.grid_w = w // patch
        self.n = self.grid_h * self.grid_w

    def decompose(self, img: np.ndarray) -> np.ndarray:
        """(C, H, W) -> (n, C, p, p), patches in row-major grid order."""
        if img.shape != (self.channels, self.height, self.width):
            raise ShapeError(f"expected image shape {(self.channels, self.height, self.width)}, got {img.shape}")
        p = self.patch
        view = img.reshape(self.channels, self.grid_h, p, self.grid_w, p)
        return np.ascontiguousarray(view.transpose(1, 3, 0, 2, 4)).reshape(self.n, self.channels, p, p)

    def reassemble(self, patches: np.ndarray) -> np.ndarray:
        """(n, C, p, p) -> (C, H, W), inverse of ``decompose``."""
        p = self.patch
        if patches.shape != (self.n, self.channels, p, p):
            raise ShapeError(f"expected patches of shape {(self.n, self.channels, p, p)}, got {patches.shape}")
        grid = patches.reshape(self.grid_h, self.grid_w, self.channels, p, p)
        return np.ascontiguousarray(grid.transpose(2, 0, 3, 1, 4)).reshape(self.channels, self.height, self.width)


@dataclass(frozen=True)
class DominanceScores:
    """Raw gate scalings and their softmax normalization."""

    raw: np.ndarray
    normalized: np.ndarray

    @classmethod
    def from_raw(cls, kappa: np.ndarray) -> "DominanceScores":
        kappa = np.asarray(kappa, dtype=np.float64)
        return cls(raw=kappa, normalized=normalize_scaling(kappa))


def normalize_scaling(kappa: np.ndarray) -> np.ndarray:
    """Softmax-normalize gate scalings into a probability vector."""
    kappa = np.asarray(kappa, dtype=np.float64)
    if kappa.ndim != 1 or kappa.size == 0:
        raise ShapeError(f"expected a non-empty 1-d score vector, got shape {kappa.shape}")
    shifted = np.exp(kappa - kappa.max())
    return shifted / shifted.sum()


def select_dominant(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the K largest scores, ties to the smaller index, ascending."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if not 1 <= k <= n:
        raise ContractError(f"k must be in [1, {n}], got {k}")
    order = np.argsort(-scores, kind="stable")  # stable: ties keep index order
    return np.sort(order[:k])


def mix_amplitude(a_dom: np.ndarray, a_rand: np.ndarray, lam: float) -> np.ndarray:
    """Convex mix lam*a_dom + (1-lam)*a_rand of two amplitude grids."""
    a_dom = np.asarray(a_dom, dtype=np.float64)
    a_rand = np.asarray(a_rand, dtype=np.float64)
    if a_dom.shape != a_rand.shape:
        raise ShapeError(f"amplitude shapes disagree: {a_dom.shape} vs {a_rand.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ContractError(f"lambda must be in [0, 1], got {lam}")
    if (a_dom < 0).any() or (a_rand < 0).any():
        raise ContractError("amplitude grids must be nonnegative")
    return lam * a_dom + (1.0 - lam) * a_rand


def augment(
    sample: ImageSample,
    kappa: np.ndarray,
    cfg: AugmentationConfig,
    donor: ImageSample,
    *,
    grid: PatchGrid,
    fixed_lambda: float | None = None,
) -> ImageSample:
    """Perturb the amplitude spectra of the dominant patches of one image.

    Per dominant patch (ascending index) the seeded stream yields first the
    mix weight lambda ~ U(0, alpha), then an independent donor patch index;
    each channel is transformed independently.  Pixels outside dominant
    patches are untouched; perturbed patches keep their phase and are clamped
    back to [0, 1].  ``fixed_lambda`` overrides the drawn weights (used by
    identity checks).
    """
    if sample.pixels.shape != donor.pixels.shape:
        raise ShapeError(f"sample {sample.pixels.shape} and donor {donor.pixels.shape} dimensions disagree")
    kappa = np.asarray(kappa, dtype=np.float64)
    if kappa.shape != (grid.n,):
        raise ShapeError(f"expected {grid.n} patch scores, got shape {kappa.shape}")
    cfg.validate(grid.n)

    scores = normalize_scaling(kappa)
    dominant = select_dominant(scores, cfg.top_k)
    patches = grid.decompose(sample.pixels)
    donor_patches = grid.decompose(donor.pixels)
    rng = np.random.default_rng(cfg.seed)

    for i in dominant:
        lam = rng.uniform(0.0, cfg.alpha) if fixed_lambda is None else float(fixed_lambda)
        j = int(rng.integers(grid.n))
        for ch in range(grid.channels):
            ap = amplitude_phase(dft2(patches[i, ch]))
            donor_amp = amplitude_phase(dft2(donor_patches[j, ch])).amplitude
            mixed = mix_amplitude(ap.amplitude, donor_amp, lam)
            new_patch = idft2(reconstruct(AmplitudePhase(mixed, ap.phase)))
            patches[i, ch] = np.clip(new_patch, 0.0, 1.0)

    return ImageSample(grid.reassemble(patches), sample.label, sample.seed)
