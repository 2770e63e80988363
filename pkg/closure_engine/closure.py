"""
Closure of the averaged balance laws by regularized deconvolution.

Averages are deconvolved into the Jacobian and velocity of the reference
map on the fine grid; particle positions and velocities are regenerated
from them and reinserted into the discrete stress formulas.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import integrate, optimize

from .chain_dynamics import ChainState, PotentialSpec, minimal_image
from .config import config
from .errors import DegenerateReconstructionError, InvalidArgumentError, OrderingError
from .meso_averages import (FineFields, MesoFields, MesoGrid,
                            convective_stress_exact, interaction_stress_exact)
from .regularization import ConvolutionSystem, FilterSpec
from .window_functions import WindowKernel

logger = logging.getLogger(__name__)


@dataclass
class ReconstructedFields:
    t: float
    J_approx: np.ndarray
    v_approx: np.ndarray
    q_approx: np.ndarray
    v_particles: np.ndarray
    clamped_fraction: float = 0.0

    def to_frame(self, grid: MesoGrid, exact: Optional[FineFields] = None) -> pd.DataFrame:
        frame = pd.DataFrame({"t": self.t, "y": grid.fine_nodes})
        if exact is not None:
            frame["J_exact"] = exact.J_exact
        frame["J_approx"] = self.J_approx
        if exact is not None:
            frame["v_exact"] = exact.v_exact
        frame["v_approx"] = self.v_approx
        return frame


def _clamp(values: np.ndarray, floor: float, label: str) -> Tuple[np.ndarray, float]:
    clamped = values < floor
    fraction = float(np.mean(clamped)) if values.size else 0.0
    if fraction > config.max_clamped_fraction:
        raise DegenerateReconstructionError(fraction, config.max_clamped_fraction)
    if fraction > 0:
        logger.warning(f"{label}: {int(np.sum(clamped))} fine node(s) clamped to {floor:g} ({fraction:.2%})")
    return np.maximum(values, floor), fraction


def deconvolve(system: ConvolutionSystem, field: np.ndarray, mass_total: float = 1.0,
               spec: Optional[FilterSpec] = None) -> np.ndarray:
    """(L/M) Q_eta[field] without any floor"""
    return system.grid.L / mass_total * system.solve(field, spec)


def reconstruct_jacobian(system: ConvolutionSystem, density: np.ndarray, mass_total: float = 1.0,
                         spec: Optional[FilterSpec] = None, floor: Optional[float] = None) -> np.ndarray:
    """J ~ (L/M) Q_eta[density], clamped below at the positivity floor"""
    floor = config.jacobian_floor if floor is None else floor
    values, _ = _clamp(deconvolve(system, density, mass_total, spec), floor, "Jacobian")
    return values


def reconstruct_velocity(system: ConvolutionSystem, density: np.ndarray, momentum: np.ndarray,
                         mass_total: float = 1.0, spec: Optional[FilterSpec] = None,
                         floor: Optional[float] = None) -> np.ndarray:
    """Q_eta[momentum] / Q_eta[density] with the Jacobian floor on the denominator"""
    if np.shape(density) != np.shape(momentum):
        raise InvalidArgumentError("Density and momentum must live on the same grid")
    denominator = reconstruct_jacobian(system, density, mass_total, spec, floor)
    return deconvolve(system, momentum, mass_total, spec) / denominator


def positions_from_jacobian(J: np.ndarray, N: int, L: float = 1.0,
                            centroid: Optional[float] = None) -> np.ndarray:
    """
    Invert the cumulative mass C(y) = int_0^y J at equally spaced levels.

    Particle i sits where C reaches (i - 1 + s) C(L) / N. J is sampled at fine
    nodes; both box ends take the average of the two end samples.

    Without a centroid s = 1/2. With one, s in [0, 1) is chosen so that the
    mean position matches the centroid modulo L/N, which pins the
    otherwise free translation of the regenerated chain.
    """
    J = np.asarray(J, dtype=float)
    if J.size < 2 or N < 1:
        raise InvalidArgumentError(f"Need at least two Jacobian samples and one particle, got {J.size}, {N}")
    if np.any(J <= 0):
        raise InvalidArgumentError("Jacobian must be positive before inversion")

    nodes = (np.arange(1, J.size + 1) - 0.5) * L / J.size
    edge = 0.5 * (J[0] + J[-1])
    knots = np.concatenate(([0.0], nodes, [L]))
    cumulative = integrate.cumulative_trapezoid(np.concatenate(([edge], J, [edge])), knots, initial=0.0)
    if np.any(np.diff(cumulative) <= 0):
        raise OrderingError(message="Cumulative mass is not strictly increasing")

    total = cumulative[-1]
    periodic_cumulative = np.concatenate((cumulative, total + cumulative[1:]))
    periodic_knots = np.concatenate((knots, L + knots[1:]))

    def place(offset: float) -> np.ndarray:
        return np.interp((np.arange(N) + offset) * total / N, periodic_cumulative, periodic_knots)

    offset = 0.5 if centroid is None else _level_offset(place, N, L, centroid)
    return np.mod(place(offset), L)


def _level_offset(place, N: int, L: float, centroid: float) -> float:
    # Sum of positions grows by exactly L as the offset runs over [0, 1]
    target = N * centroid
    start = float(np.sum(place(0.0))) - target
    wraps = np.ceil(start / L)
    if start == wraps * L:
        return 0.0
    return float(optimize.brentq(lambda s: float(np.sum(place(s))) - target - wraps * L, 0.0, 1.0))


def particle_velocities(v_approx: np.ndarray, q_approx: np.ndarray, L: float = 1.0) -> np.ndarray:
    """Periodic linear interpolation of a fine-grid field at particle positions"""
    v_approx = np.asarray(v_approx, dtype=float)
    nodes = (np.arange(1, v_approx.size + 1) - 0.5) * L / v_approx.size
    knots = np.concatenate(([nodes[-1] - L], nodes, [nodes[0] + L]))
    values = np.concatenate(([v_approx[-1]], v_approx, [v_approx[0]]))
    return np.interp(np.mod(q_approx, L), knots, values)


def approximate_stresses(q_approx: np.ndarray, v_particles: np.ndarray, kernel: WindowKernel,
                         grid: MesoGrid, spec: PotentialSpec, mass_total: float = 1.0,
                         t: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Exact stress formulas evaluated on the reconstructed particle set"""
    state = ChainState(t=t, L=grid.L, N=len(q_approx), q=q_approx, v=v_particles, mass_total=mass_total)
    return (convective_stress_exact(state, kernel, grid),
            interaction_stress_exact(state, kernel, grid, spec))


def reconstruct(system: ConvolutionSystem, fields: MesoFields, N: int, mass_total: float = 1.0,
                spec: Optional[FilterSpec] = None, centroid: Optional[float] = None) -> ReconstructedFields:
    """
    Fine fields, positions and particle velocities from one snapshot of averages.

    centroid is the mean particle position, known from the initial data
    because the total momentum is conserved.
    """
    raw = deconvolve(system, fields.density, mass_total, spec)
    J, fraction = _clamp(raw, config.jacobian_floor, f"Jacobian at t={fields.t:g}")
    v = deconvolve(system, fields.momentum, mass_total, spec) / J
    q = positions_from_jacobian(J, N, system.grid.L, centroid)
    return ReconstructedFields(
        t=fields.t,
        J_approx=J,
        v_approx=v,
        q_approx=q,
        v_particles=particle_velocities(v, q, system.grid.L),
        clamped_fraction=fraction,
    )


def optimal_shift(q_approx: np.ndarray, q_ref: np.ndarray, L: float = 1.0) -> Tuple[float, float]:
    """
    Circular shift best aligning reconstructed with reference positions.

    Returns the mean shift and the largest remaining minimal-image distance
    after applying it, over the cyclic index offsets near the best match.
    """
    approx = np.sort(np.mod(q_approx, L))
    ref = np.sort(np.mod(q_ref, L))
    if approx.size != ref.size:
        raise InvalidArgumentError(f"Position sets differ in size: {approx.size} vs {ref.size}")

    nearest = int(np.argmin(np.abs(minimal_image(ref - approx[0], L))))
    best = (0.0, np.inf)
    for offset in (nearest - 1, nearest, nearest + 1):
        diff = minimal_image(np.roll(ref, -offset) - approx, L)
        shift = float(np.mean(diff))
        error = float(np.max(np.abs(minimal_image(diff - shift, L))))
        if error < best[1]:
            best = (shift, error)
    return best
