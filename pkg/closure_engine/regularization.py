"""
Regularized deconvolution of coarse averages.

The averaging operator is discretized as a B x N' matrix acting on fine-grid
values. Its singular value decomposition is computed once per kernel and
grid and reused for every snapshot; solutions are filtered spectral sums
over the retained singular triplets.
"""

import logging
import math
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg

from .config import config
from .errors import GridMismatchError, InvalidArgumentError, SvdFailureError
from .meso_averages import MesoGrid
from .window_functions import WindowKernel

logger = logging.getLogger(__name__)

# Singular values below this fraction of sigma_1 are always dropped
RELATIVE_RANK_FLOOR = 1e-15


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD A = U diag(sigma) V^T restricted to the retained triplets"""

    sigma: np.ndarray
    U: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.sigma.size)

    def truncate(self, threshold: float) -> "SvdFactors":
        keep = int(np.sum(self.sigma >= threshold))
        return SvdFactors(sigma=self.sigma[:keep], U=self.U[:, :keep], V=self.V[:, :keep])


@dataclass(frozen=True)
class FilterSpec:
    variant: str = "tsvd"
    sigma_cut: Optional[float] = None
    alpha: Optional[float] = None
    n: Optional[int] = None

    def __post_init__(self):
        variant = str(self.variant).lower()
        object.__setattr__(self, "variant", variant)
        if variant not in ("tsvd", "tikhonov", "landweber"):
            raise InvalidArgumentError(f"Unknown filter variant: {self.variant!r}")
        if variant == "tikhonov" and (self.alpha is None or self.alpha < 0):
            raise InvalidArgumentError(f"Tikhonov filtering needs alpha >= 0, got {self.alpha}")
        if variant == "landweber" and (self.n is None or self.n < 0):
            raise InvalidArgumentError(f"Landweber filtering needs n >= 0, got {self.n}")
        if self.sigma_cut is not None and self.sigma_cut < 0:
            raise InvalidArgumentError(f"sigma_cut must be non-negative, got {self.sigma_cut}")

    @classmethod
    def from_dict(cls, data: Optional[Dict]) -> "FilterSpec":
        data = dict(data or {})
        return cls(variant=data.get("variant", "tsvd"), sigma_cut=data.get("sigma_cut"),
                   alpha=data.get("alpha"), n=data.get("n"))

    @property
    def cut(self) -> float:
        return config.sigma_cut if self.sigma_cut is None else self.sigma_cut

    @property
    def label(self) -> str:
        if self.variant == "tikhonov":
            return f"tikhonov(alpha={self.alpha:g})"
        if self.variant == "landweber":
            return f"landweber(n={self.n})"
        return f"tsvd(cut={self.cut:g})"

    def to_dict(self) -> Dict:
        return {"variant": self.variant, "sigma_cut": self.cut, "alpha": self.alpha, "n": self.n}


def filter_factor(spec: FilterSpec, sigma):
    """phi(sigma) for the three filter families"""
    scalar = np.ndim(sigma) == 0
    sigma = np.asarray(sigma, dtype=float)
    if spec.variant == "tikhonov":
        s2 = sigma * sigma
        phi = np.divide(s2, s2 + spec.alpha, out=np.ones_like(s2), where=(s2 + spec.alpha) > 0)
    elif spec.variant == "landweber":
        phi = 1.0 - (1.0 - sigma * sigma) ** (spec.n + 1)
    else:
        phi = np.where(sigma >= spec.cut, 1.0, 0.0)
    return float(phi) if scalar else phi


def assemble_matrix(kernel: WindowKernel, grid: MesoGrid) -> np.ndarray:
    """A[k, m] = psi_eta^per(x_k - y_m) * L / N'"""
    if not math.isclose(kernel.L, grid.L):
        raise GridMismatchError(f"Kernel box {kernel.L} does not match grid box {grid.L}")
    separations = grid.coarse_nodes[:, None] - grid.fine_nodes[None, :]
    return kernel.periodic(separations) * grid.fine_spacing


def compute_svd(A: np.ndarray, sigma_cut: Optional[float] = None, description: str = "") -> SvdFactors:
    """
    Thin SVD through LAPACK gesvd, keeping sigma_j >= max(sigma_cut, 1e-15 sigma_1).
    """
    sigma_cut = config.sigma_cut if sigma_cut is None else sigma_cut
    if not np.all(np.isfinite(A)):
        raise SvdFailureError(description or f"matrix {A.shape}", "matrix has non-finite entries")
    try:
        U, sigma, Vt = linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
    except (linalg.LinAlgError, ValueError) as e:
        logger.error(f"SVD failed for {description or A.shape}: {str(e)}")
        raise SvdFailureError(description or f"matrix {A.shape}", str(e))

    factors = SvdFactors(sigma=sigma, U=U, V=Vt.T)
    threshold = max(sigma_cut, RELATIVE_RANK_FLOOR * (sigma[0] if sigma.size else 0.0))
    return factors.truncate(threshold)


def retained_rank(svd: SvdFactors, sigma_cut: float) -> int:
    return int(np.sum(svd.sigma >= sigma_cut))


@dataclass(frozen=True)
class ConvolutionSystem:
    A: np.ndarray
    grid: MesoGrid
    kernel: WindowKernel
    svd: SvdFactors
    sigma_cut: float
    rhs_tol: float

    @property
    def retained_rank(self) -> int:
        return self.svd.rank

    @property
    def description(self) -> str:
        return f"{self.kernel.label}, B={self.grid.B}, Nfine={self.grid.Nf}"

    def solve(self, b: np.ndarray, spec: Optional[FilterSpec] = None) -> np.ndarray:
        return regularized_solve(self, b, spec)


_cache: Dict[Tuple, SvdFactors] = {}
_matrices: Dict[Tuple, np.ndarray] = {}
_cache_lock = threading.Lock()


def _cache_key(kernel: WindowKernel, grid: MesoGrid) -> Tuple:
    return (kernel.kind.value, float(kernel.eta), grid.B, grid.Nf, float(grid.L))


def build_system(kernel: WindowKernel, grid: MesoGrid, sigma_cut: Optional[float] = None,
                 rhs_tol: Optional[float] = None) -> ConvolutionSystem:
    """
    Convolution system for a kernel and grid; the full factorization is
    cached per (window, eta, B, Nfine, L) for the life of the process.
    """
    sigma_cut = config.sigma_cut if sigma_cut is None else sigma_cut
    rhs_tol = config.rhs_tol if rhs_tol is None else rhs_tol
    key = _cache_key(kernel, grid)

    with _cache_lock:
        full = _cache.get(key)
        A = _matrices.get(key)
    if full is None:
        logger.info(f"Factorizing convolution matrix for {kernel.label}, B={grid.B}, Nfine={grid.Nf}")
        A = assemble_matrix(kernel, grid)
        full = compute_svd(A, sigma_cut=0.0, description=f"{kernel.label}, B={grid.B}, Nfine={grid.Nf}")
        with _cache_lock:
            _cache[key] = full
            _matrices[key] = A

    threshold = max(sigma_cut, RELATIVE_RANK_FLOOR * (full.sigma[0] if full.rank else 0.0))
    svd = full.truncate(threshold)
    logger.debug(f"Retained rank {svd.rank} of {full.rank} for {kernel.label} at sigma_cut={sigma_cut:g}")
    return ConvolutionSystem(A=A, grid=grid, kernel=kernel, svd=svd, sigma_cut=sigma_cut, rhs_tol=rhs_tol)


def clear_cache() -> None:
    with _cache_lock:
        _cache.clear()
        _matrices.clear()


def spectral_filter_rhs(b: np.ndarray, svd: SvdFactors, rhs_tol: float) -> np.ndarray:
    """Coefficients <b, xi_j> with those below rhs_tol in magnitude set to 0"""
    b = np.asarray(b, dtype=float)
    if b.shape != (svd.U.shape[0],):
        raise GridMismatchError(f"Right-hand side of shape {b.shape} does not match {svd.U.shape[0]} coarse nodes")
    coefficients = svd.U.T @ b
    coefficients[np.abs(coefficients) < rhs_tol] = 0.0
    return coefficients


def regularized_solve(system: ConvolutionSystem, b: np.ndarray,
                      spec: Optional[FilterSpec] = None) -> np.ndarray:
    """x = sum_j b_j phi(sigma_j) / sigma_j * xi_hat_j over retained triplets"""
    spec = spec or FilterSpec(sigma_cut=system.sigma_cut)
    coefficients = spectral_filter_rhs(b, system.svd, system.rhs_tol)
    sigma = system.svd.sigma
    weights = coefficients * filter_factor(spec, sigma) / sigma
    return system.svd.V @ weights


def singular_value_table(system: ConvolutionSystem) -> List[Tuple[int, float]]:
    """Rows (j, sigma_j) of the retained spectrum, j starting at 1"""
    return [(j + 1, float(s)) for j, s in enumerate(system.svd.sigma)]


def full_spectrum(kernel: WindowKernel, grid: MesoGrid) -> np.ndarray:
    """Every singular value of the cached factorization"""
    build_system(kernel, grid)
    with _cache_lock:
        return _cache[_cache_key(kernel, grid)].sigma.copy()
