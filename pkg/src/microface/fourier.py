"""Exact 2-D discrete Fourier analysis of image patches.

The forward transform is the unnormalized double sum over the spatial grid;
the inverse divides by H*W.  Spectra decompose into a nonnegative amplitude
grid and a phase grid in (-pi, pi], and recombine as ``A * exp(i*P)`` so
that decomposition followed by reconstruction is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError

# Largest tolerated imaginary residue when inverting a spectrum that is
# supposed to be conjugate-symmetric (i.e. to come from a real patch).
IMAG_RESIDUE_TOL = 1e-6


@dataclass(frozen=True)
class Spectrum:
    """Complex frequency grid of a single-channel patch."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.ndim != 2 or vals.size == 0:
            raise ShapeError(f"a spectrum must be a non-empty 2-d grid, got shape {vals.shape}")
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class AmplitudePhase:
    """Polar decomposition of a spectrum: amplitude >= 0, phase in (-pi, pi]."""

    amplitude: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitude, dtype=np.float64)
        ph = np.asarray(self.phase, dtype=np.float64)
        if amp.shape != ph.shape:
            raise ShapeError(f"amplitude shape {amp.shape} != phase shape {ph.shape}")
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "phase", ph)


def dft2(patch: np.ndarray) -> Spectrum:
    """Unnormalized 2-D discrete Fourier transform of a real patch.

    S(u, v) = sum_h sum_w x(h, w) * exp(-2*pi*i*(h*u/H + w*v/W))
    """
    arr = np.asarray(patch, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ShapeError(f"dft2 needs a non-empty 2-d grid, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ContractError("dft2 input contains non-finite values")
    return Spectrum(np.fft.fft2(arr))


def idft2(spectrum: Spectrum) -> np.ndarray:
    """Inverse transform back to the spatial grid, dropping the imaginary part.

    The caller is expected to pass a conjugate-symmetric spectrum; the
    imaginary residue must stay below ``IMAG_RESIDUE_TOL`` or this raises.
    """
    out = np.fft.ifft2(spectrum.values)
    residue = float(np.abs(out.imag).max())
    if residue >= IMAG_RESIDUE_TOL:
        raise ContractError(
            f"idft2 of a non-conjugate-symmetric spectrum: imaginary residue {residue:.3e}"
        )
    return np.ascontiguousarray(out.real)


def amplitude_phase(spectrum: Spectrum) -> AmplitudePhase:
    """Split a spectrum into amplitude and full-quadrant phase.

    Zero-amplitude bins get phase 0 by convention.
    """
    re = spectrum.values.real
    im = spectrum.values.imag
    amp = np.hypot(re, im)
    phase = np.where(amp == 0.0, 0.0, np.arctan2(im, re))
    return AmplitudePhase(amp, phase)


def reconstruct(ap: AmplitudePhase) -> Spectrum:
    """Recombine amplitude and phase into a spectrum: A * exp(i*P)."""
    if (ap.amplitude < 0).any():
        raise ContractError("reconstruct: negative amplitude")
    return Spectrum(ap.amplitude * np.exp(1j * ap.phase))
