"""
Discrete Fourier diagnostics for exact and reconstructed fields.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd

from .chain_dynamics import ChainState
from .errors import GridMismatchError, InvalidArgumentError
from .meso_averages import MesoGrid, kernel_sum
from .window_functions import WindowKernel

logger = logging.getLogger(__name__)

# Oversampling factor for the reference kernel transform
ALIASING_OVERSAMPLING = 16


@dataclass(frozen=True)
class SpectrumTable:
    k: np.ndarray
    amplitudes: np.ndarray

    @property
    def size(self) -> int:
        return int(self.k.size)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"k": self.k, "amplitude": self.amplitudes})


def dft_field(values) -> SpectrumTable:
    """Moduli of the 1/n-normalized DFT for k = 0..n//2"""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise InvalidArgumentError(f"Need a sequence of at least two values, got shape {values.shape}")
    coefficients = np.fft.rfft(values) / values.size
    return SpectrumTable(k=np.arange(coefficients.size), amplitudes=np.abs(coefficients))


def parseval_energy(table: SpectrumTable, n: int) -> float:
    """Sum of squared amplitudes over all (+/-k) wavenumbers of an n-point DFT"""
    weights = np.full(table.size, 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    return float(np.sum(weights * table.amplitudes ** 2))


def sampled_kernel_transform(kernel: WindowKernel, B: int, oversampling: int = 1) -> np.ndarray:
    """
    (L/n) * DFT of psi_eta^per sampled at n = B * oversampling points,
    for k = 0..B//2
    """
    n = B * oversampling
    samples = kernel.periodic(np.arange(n) * kernel.L / n)
    return (kernel.L / n * np.fft.fft(samples))[: B // 2 + 1]


def coarse_coefficients(state: ChainState, weights: np.ndarray, kernel: WindowKernel,
                        grid: MesoGrid) -> np.ndarray:
    """Fourier coefficients of the windowed average, phase-referenced to x = 0"""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (state.N,):
        raise GridMismatchError(f"Expected {state.N} particle weights, got {weights.shape}")
    averaged = kernel_sum(kernel, grid.coarse_nodes, state.q, weights)
    k = np.arange(grid.B // 2 + 1)
    shift = np.exp(-1j * np.pi * k / grid.B)
    return np.fft.fft(averaged)[: k.size] / grid.B * shift


def lowpass_identity_check(state: ChainState, weights: np.ndarray, kernel: WindowKernel,
                           grid: MesoGrid) -> float:
    """
    Largest deviation between the transform of the coarse average and the
    kernel transform times the exact particle sum, over k = 0..B//2.
    """
    coarse = coarse_coefficients(state, weights, kernel, grid)
    k = np.arange(coarse.size)
    particle_sum = np.exp(-2j * np.pi * np.outer(k, state.q) / state.L) @ np.asarray(weights, dtype=float)
    predicted = sampled_kernel_transform(kernel, grid.B) * particle_sum / state.L
    deviation = float(np.max(np.abs(coarse - predicted)))
    logger.debug(f"Low-pass identity deviation {deviation:.3e} for {kernel.label}")
    return deviation


def aliasing_error(kernel: WindowKernel, grid: MesoGrid) -> float:
    """Difference between the B-point kernel transform and an oversampled one"""
    coarse = sampled_kernel_transform(kernel, grid.B)
    fine = sampled_kernel_transform(kernel, grid.B, ALIASING_OVERSAMPLING)
    return float(np.max(np.abs(coarse - fine)))


def spectrum_report(exact, approx, rel_tol: float = 0.2,
                    floor: float = 1e-10) -> Tuple[SpectrumTable, SpectrumTable, int]:
    """
    Spectra of both fields and the largest k up to which every significant
    exact amplitude is matched within rel_tol.
    """
    exact = np.asarray(exact, dtype=float)
    approx = np.asarray(approx, dtype=float)
    if exact.shape != approx.shape:
        raise GridMismatchError(f"Spectrum inputs differ in length: {exact.shape} vs {approx.shape}")
    exact_table = dft_field(exact)
    approx_table = dft_field(approx)

    significant = exact_table.amplitudes >= floor
    mismatch = np.abs(approx_table.amplitudes - exact_table.amplitudes) > rel_tol * exact_table.amplitudes
    failing = np.flatnonzero(significant & mismatch)
    k_match = int(failing[0]) - 1 if failing.size else exact.size // 2
    return exact_table, approx_table, k_match


def spectrum_frame(exact: SpectrumTable, approx: SpectrumTable) -> pd.DataFrame:
    return pd.DataFrame({"k": exact.k, "amp_exact": exact.amplitudes, "amp_approx": approx.amplitudes})


def gibbs_overshoot(exact, approx) -> float:
    """How far the reconstruction leaves the range of the exact field"""
    exact = np.asarray(exact, dtype=float)
    approx = np.asarray(approx, dtype=float)
    above = max(0.0, float(np.max(approx) - np.max(exact)))
    below = max(0.0, float(np.min(exact) - np.min(approx)))
    return max(above, below)
