"""
Hardy-Murdoch averages of a particle chain on a coarse periodic grid.

Every average is a kernel-weighted sum over particles (or over points on
bonds, for the interaction stress) evaluated at the coarse nodes. The exact
recoverable fields, the Jacobian and the velocity of the reference map, are
sampled on the fine grid.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional, Tuple

import numpy as np
import pandas as pd

from .chain_dynamics import (ChainState, PotentialSpec, lj_derivative,
                             minimal_image)
from .config import config
from .errors import GridMismatchError, InvalidArgumentError, OrderingError
from .window_functions import WindowKernel, WindowKind

logger = logging.getLogger(__name__)

# Entries of the kernel matrix evaluated per block
BLOCK_ENTRIES = 4_000_000

GAUSS_LEGENDRE_POINTS = 16
MIDPOINT_PANELS = 64


@dataclass(frozen=True)
class MesoGrid:
    B: int
    Nf: int
    L: float = 1.0

    def __post_init__(self):
        if self.B < 1 or self.Nf < self.B:
            raise InvalidArgumentError(f"Grid needs 1 <= B <= Nf, got B={self.B}, Nf={self.Nf}")
        if self.L <= 0:
            raise InvalidArgumentError(f"Box length must be positive, got {self.L}")

    @property
    def coarse_nodes(self) -> np.ndarray:
        return (np.arange(1, self.B + 1) - 0.5) * self.L / self.B

    @property
    def fine_nodes(self) -> np.ndarray:
        return (np.arange(1, self.Nf + 1) - 0.5) * self.L / self.Nf

    @property
    def coarse_spacing(self) -> float:
        return self.L / self.B

    @property
    def fine_spacing(self) -> float:
        return self.L / self.Nf


@dataclass
class MesoFields:
    t: float
    density: np.ndarray
    momentum: np.ndarray
    velocity: np.ndarray
    stress_conv: np.ndarray
    stress_int: np.ndarray
    floored: np.ndarray = field(default=None)

    @property
    def floored_count(self) -> int:
        return 0 if self.floored is None else int(np.sum(self.floored))

    def to_frame(self, grid: MesoGrid) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.t,
            "x": grid.coarse_nodes,
            "density": self.density,
            "momentum": self.momentum,
            "velocity": self.velocity,
            "stress_conv": self.stress_conv,
            "stress_int": self.stress_int,
        })


@dataclass
class FineFields:
    t: float
    J_exact: np.ndarray
    v_exact: np.ndarray

    def to_frame(self, grid: MesoGrid) -> pd.DataFrame:
        return pd.DataFrame({"t": self.t, "y": grid.fine_nodes, "J_exact": self.J_exact, "v_exact": self.v_exact})


def _check_box(state: ChainState, grid: MesoGrid, kernel: Optional[WindowKernel] = None) -> None:
    if not np.isclose(state.L, grid.L) or (kernel is not None and not np.isclose(kernel.L, grid.L)):
        raise GridMismatchError(f"State box {state.L}, grid box {grid.L} and kernel box "
                                f"{kernel.L if kernel else grid.L} differ")


def kernel_blocks(kernel: WindowKernel, nodes: np.ndarray,
                  points: np.ndarray) -> Iterator[Tuple[slice, np.ndarray]]:
    """Yield (point slice, psi_eta^per(node - point) block) pairs"""
    step = max(1, BLOCK_ENTRIES // max(1, nodes.size))
    for start in range(0, points.size, step):
        part = slice(start, min(points.size, start + step))
        yield part, kernel.periodic(nodes[:, None] - points[None, part])


def kernel_sum(kernel: WindowKernel, nodes: np.ndarray, points: np.ndarray,
               weights: np.ndarray) -> np.ndarray:
    """sum_i weights_i * psi_eta^per(node_k - point_i) for every node"""
    weights = np.asarray(weights, dtype=float)
    total = np.zeros((nodes.size,) + weights.shape[1:])
    for part, block in kernel_blocks(kernel, nodes, points):
        total += block @ weights[part]
    return total


def average_density(state: ChainState, kernel: WindowKernel, grid: MesoGrid) -> np.ndarray:
    _check_box(state, grid, kernel)
    return state.particle_mass * kernel_sum(kernel, grid.coarse_nodes, state.q, np.ones(state.N))


def average_momentum(state: ChainState, kernel: WindowKernel, grid: MesoGrid) -> np.ndarray:
    _check_box(state, grid, kernel)
    return state.particle_mass * kernel_sum(kernel, grid.coarse_nodes, state.q, state.v)


def density_floor(mass_total: float = 1.0, L: float = 1.0) -> float:
    return config.density_floor_factor * mass_total / L


def average_velocity(density: np.ndarray, momentum: np.ndarray,
                     floor: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Momentum over density at nodes where density reaches the floor.

    Returns the velocity and a mask of floored nodes, where the velocity is 0.
    """
    density = np.asarray(density, dtype=float)
    momentum = np.asarray(momentum, dtype=float)
    if density.shape != momentum.shape:
        raise GridMismatchError(f"Density {density.shape} and momentum {momentum.shape} differ in shape")
    floor = density_floor() if floor is None else floor
    floored = density < floor
    velocity = np.zeros_like(density)
    np.divide(momentum, density, out=velocity, where=~floored)
    if np.any(floored):
        logger.warning(f"Velocity undefined at {int(np.sum(floored))} node(s) with density below {floor:.1e}")
    return velocity, floored


def convective_stress_exact(state: ChainState, kernel: WindowKernel, grid: MesoGrid,
                            velocity: Optional[np.ndarray] = None) -> np.ndarray:
    """-sum_i m (v_i - vbar(x_k))^2 psi_eta(x_k - q_i), never positive"""
    _check_box(state, grid, kernel)
    nodes = grid.coarse_nodes
    if velocity is None:
        density = average_density(state, kernel, grid)
        momentum = average_momentum(state, kernel, grid)
        velocity, _ = average_velocity(density, momentum, density_floor(state.mass_total, state.L))

    total = np.zeros(nodes.size)
    for part, block in kernel_blocks(kernel, nodes, state.q):
        fluctuation = state.v[None, part] - velocity[:, None]
        total += np.sum(block * fluctuation * fluctuation, axis=1)
    return -state.particle_mass * total


def _bond_quadrature(kind: WindowKind) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes in [0, 1] and weights for integrating along one bond"""
    if kind is WindowKind.TRAPEZOID:
        nodes = (np.arange(MIDPOINT_PANELS) + 0.5) / MIDPOINT_PANELS
        return nodes, np.full(MIDPOINT_PANELS, 1.0 / MIDPOINT_PANELS)
    x, w = np.polynomial.legendre.leggauss(GAUSS_LEGENDRE_POINTS)
    return 0.5 * (x + 1.0), 0.5 * w


def bond_list(state: ChainState, spec: PotentialSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Interacting bonds (i, i+s) within the cutoff.

    Returns the start positions, the minimal-image bond vectors and the
    virial coefficients f_ij (q_j - q_i).
    """
    starts, vectors, coefficients = [], [], []
    for shift in range(1, spec.neighbor_count + 1):
        r = minimal_image(np.roll(state.q, -shift) - state.q, state.L)
        distance = np.abs(r)
        inside = (distance <= spec.cutoff) & (distance > 0)
        if not np.any(inside):
            continue
        starts.append(state.q[inside])
        vectors.append(r[inside])
        coefficients.append(spec.force_scale * lj_derivative(distance[inside], spec) * distance[inside])
    if not starts:
        empty = np.zeros(0)
        return empty, empty, empty
    return np.concatenate(starts), np.concatenate(vectors), np.concatenate(coefficients)


def interaction_stress_exact(state: ChainState, kernel: WindowKernel, grid: MesoGrid,
                             spec: PotentialSpec) -> np.ndarray:
    """
    Interaction stress with tension counted positive.

    The bond integral of the kernel is exact for the characteristic window
    (difference of its antiderivative) and uses a fixed quadrature on each
    bond otherwise.
    """
    _check_box(state, grid, kernel)
    nodes = grid.coarse_nodes
    starts, vectors, coefficients = bond_list(state, spec)
    if starts.size == 0:
        return np.zeros(nodes.size)

    if kernel.kind is WindowKind.CHARACTERISTIC:
        total = np.zeros(nodes.size)
        step = max(1, BLOCK_ENTRIES // nodes.size)
        for start in range(0, starts.size, step):
            part = slice(start, start + step)
            # int_0^1 psi(x - q_i - s r) ds = (1/r) int_{x - q_i - r}^{x - q_i} psi
            lo = nodes[:, None] - starts[None, part] - vectors[None, part]
            integral = kernel.segment_integral(lo, np.broadcast_to(vectors[None, part], lo.shape))
            total += integral @ (coefficients[part] / vectors[part])
        return total

    s, w = _bond_quadrature(kernel.kind)
    points = (starts[:, None] + s[None, :] * vectors[:, None]).ravel()
    weights = (coefficients[:, None] * w[None, :]).ravel()
    return kernel_sum(kernel, nodes, points, weights)


def compute_meso_fields(state: ChainState, kernel: WindowKernel, grid: MesoGrid,
                        spec: PotentialSpec) -> MesoFields:
    """All coarse averages of one snapshot"""
    density = average_density(state, kernel, grid)
    momentum = average_momentum(state, kernel, grid)
    velocity, floored = average_velocity(density, momentum, density_floor(state.mass_total, state.L))
    return MesoFields(
        t=state.t,
        density=density,
        momentum=momentum,
        velocity=velocity,
        stress_conv=convective_stress_exact(state, kernel, grid, velocity),
        stress_int=interaction_stress_exact(state, kernel, grid, spec),
        floored=floored,
    )


def unwrap_positions(state: ChainState) -> Tuple[np.ndarray, np.ndarray]:
    """
    Positions unrolled along the ring starting at particle 0, and the gaps
    to each right neighbour. Raises OrderingError if the ring is not ordered.
    """
    gaps = minimal_image(np.roll(state.q, -1) - state.q, state.L)
    bad = np.flatnonzero(gaps <= 0)
    if bad.size:
        raise OrderingError(int(bad[0]))
    if not np.isclose(np.sum(gaps), state.L, rtol=1e-9, atol=0.0):
        raise OrderingError(message=f"Gaps sum to {np.sum(gaps)} instead of L={state.L}")
    unwrapped = state.q[0] + np.concatenate(([0.0], np.cumsum(gaps[:-1])))
    return unwrapped, gaps


def exact_recoverables(state: ChainState, grid: MesoGrid) -> FineFields:
    """Jacobian of the reference map and interpolated velocity on the fine grid"""
    _check_box(state, grid)
    unwrapped, gaps = unwrap_positions(state)
    L = state.L
    spacing = L / state.N

    y = unwrapped[0] + np.mod(grid.fine_nodes - unwrapped[0], L)
    gap_index = np.clip(np.searchsorted(unwrapped, y, side="right") - 1, 0, state.N - 1)
    jacobian = spacing / gaps[gap_index]

    knots = np.append(unwrapped, unwrapped[0] + L)
    values = np.append(state.v, state.v[0])
    velocity = np.interp(y, knots, values)

    return FineFields(t=state.t, J_exact=jacobian, v_exact=velocity)


def centered_difference(values: np.ndarray, spacing: float) -> np.ndarray:
    return (np.roll(values, -1) - np.roll(values, 1)) / (2.0 * spacing)


def mass_balance_residual(fields_prev: MesoFields, fields_next: MesoFields, grid: MesoGrid) -> float:
    """Max-norm residual of the discrete mass balance between two snapshots"""
    for fields in (fields_prev, fields_next):
        if fields.density.size != grid.B or fields.momentum.size != grid.B:
            raise GridMismatchError(f"Fields with {fields.density.size} nodes do not match B={grid.B}")
    dt = fields_next.t - fields_prev.t
    if not dt > 0:
        raise InvalidArgumentError(f"Snapshots must be ordered in time, got dt={dt}")
    midpoint_momentum = 0.5 * (fields_prev.momentum + fields_next.momentum)
    residual = (fields_next.density - fields_prev.density) / dt + centered_difference(
        midpoint_momentum, grid.coarse_spacing)
    return float(np.max(np.abs(residual)))
