"""
Molecular dynamics of the periodic one-dimensional Lennard-Jones chain.

Particles of mass M/N sit on a ring of length L and interact through a
truncated Lennard-Jones potential with forces scaled by 1/N. Time stepping
uses Velocity Verlet.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from .config import config
from .errors import InvalidArgumentError, SingularityError

logger = logging.getLogger(__name__)

# Pairs closer than this fraction of L are treated as coincident
COINCIDENCE_FRACTION = 1e-12


class InitialCondition(Enum):
    SINE = "sine"
    QUARTIC = "quartic"

    @classmethod
    def from_name(cls, name) -> "InitialCondition":
        if isinstance(name, InitialCondition):
            return name
        key = str(name).strip().lower()
        aliases = {"1": cls.SINE, "2": cls.QUARTIC, "test1": cls.SINE, "test2": cls.QUARTIC}
        if key in aliases:
            return aliases[key]
        for case in cls:
            if case.value == key:
                return case
        raise InvalidArgumentError(f"Unknown test case: {name!r}")


@dataclass(frozen=True)
class PotentialSpec:
    epsilon_well: float = 0.025
    sigma: float = 1e-3 / 2 ** (1 / 6)
    cutoff_factor: float = 2.5
    force_scale: float = 1e-3

    def __post_init__(self):
        if self.sigma <= 0:
            raise InvalidArgumentError(f"sigma must be positive, got {self.sigma}")
        if self.epsilon_well < 0:
            raise InvalidArgumentError(f"epsilon_well must be non-negative, got {self.epsilon_well}")
        if self.cutoff_factor < 1:
            raise InvalidArgumentError(f"cutoff_factor must be >= 1, got {self.cutoff_factor}")

    @classmethod
    def for_lattice(cls, N: int, L: float = 1.0, epsilon_well: Optional[float] = None,
                    cutoff_factor: Optional[float] = None) -> "PotentialSpec":
        """Potential whose equilibrium distance equals the lattice spacing L/N"""
        if N < 1 or L <= 0:
            raise InvalidArgumentError(f"Invalid lattice N={N}, L={L}")
        return cls(
            epsilon_well=config.lj_epsilon if epsilon_well is None else epsilon_well,
            sigma=(L / N) / 2 ** (1 / 6),
            cutoff_factor=config.lj_cutoff_factor if cutoff_factor is None else cutoff_factor,
            force_scale=1.0 / N,
        )

    @property
    def equilibrium_distance(self) -> float:
        return 2 ** (1 / 6) * self.sigma

    @property
    def cutoff(self) -> float:
        return self.cutoff_factor * self.equilibrium_distance

    @property
    def neighbor_count(self) -> int:
        """Neighbours on each side within the cutoff of an equilibrium lattice"""
        return int(math.floor(self.cutoff_factor)) + 1

    @property
    def energy_shift(self) -> float:
        return float(_lj_raw(self.cutoff, self))


@dataclass(frozen=True)
class ChainState:
    t: float
    L: float
    N: int
    q: np.ndarray
    v: np.ndarray
    mass_total: float = 1.0

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        v = np.array(self.v, dtype=float)
        if q.shape != (self.N,) or v.shape != (self.N,):
            raise InvalidArgumentError(f"Expected {self.N} positions and velocities, got {q.shape} and {v.shape}")
        if self.L <= 0 or self.mass_total <= 0:
            raise InvalidArgumentError(f"L and mass_total must be positive, got {self.L}, {self.mass_total}")
        q.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)

    @property
    def particle_mass(self) -> float:
        return self.mass_total / self.N

    @property
    def momentum(self) -> float:
        return float(self.particle_mass * np.sum(self.v))

    def evolve(self, q: np.ndarray, v: np.ndarray, t: float) -> "ChainState":
        return replace(self, q=np.mod(q, self.L), v=v, t=t)


@dataclass
class Trajectory:
    snapshots: List[ChainState] = field(default_factory=list)
    energy_trace: List[Tuple[float, float, float, float]] = field(default_factory=list)
    dt: float = 0.0
    potential: Optional[PotentialSpec] = None

    @property
    def times(self) -> List[float]:
        return [s.t for s in self.snapshots]

    def state_at(self, t: float) -> ChainState:
        """Snapshot whose time is closest to t"""
        if not self.snapshots:
            raise InvalidArgumentError("Trajectory has no snapshots")
        times = np.asarray(self.times)
        index = int(np.argmin(np.abs(times - t)))
        if abs(times[index] - t) > max(self.dt, 1e-12):
            raise InvalidArgumentError(f"No snapshot near t={t}; available times {times[0]}..{times[-1]}")
        return self.snapshots[index]

    def energy_deviation(self) -> Tuple[float, float]:
        """Max absolute and relative total energy deviation from the first sample"""
        totals = np.array([e[3] for e in self.energy_trace])
        if totals.size == 0:
            return 0.0, 0.0
        absolute = float(np.max(np.abs(totals - totals[0])))
        relative = absolute / abs(totals[0]) if totals[0] != 0 else math.inf
        return absolute, relative

    def min_pair_distance(self) -> float:
        """Smallest nearest-neighbour distance over all snapshots"""
        return min(float(np.min(neighbor_gaps(s))) for s in self.snapshots)

    def trajectory_frame(self) -> pd.DataFrame:
        frames = [
            pd.DataFrame({"t": s.t, "index": np.arange(s.N), "q": s.q, "v": s.v})
            for s in self.snapshots
        ]
        return pd.concat(frames, ignore_index=True)

    def energy_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.energy_trace, columns=["t", "kinetic", "potential", "total"])


def init_chain(N: int, L: float = 1.0, test_case="sine", mass_total: float = 1.0) -> ChainState:
    """Equally spaced particles with one of the two initial velocity profiles"""
    case = InitialCondition.from_name(test_case)
    if N < 2:
        raise InvalidArgumentError(f"Need at least two particles, got N={N}")
    q = (np.arange(1, N + 1) - 0.5) * L / N
    x = q / L

    if case is InitialCondition.SINE:
        v = 1e-2 * np.sin(2.0 * np.pi * x)
    else:
        inside = (x >= 1.0 / 3.0) & (x <= 2.0 / 3.0)
        v = np.where(inside, 25.0 * (x - 1.0 / 3.0) ** 2 * (x - 2.0 / 3.0) ** 2, 0.0)

    return ChainState(t=0.0, L=L, N=N, q=q, v=v, mass_total=mass_total)


def _lj_raw(xi, spec: PotentialSpec):
    s6 = (spec.sigma / xi) ** 6
    return 4.0 * spec.epsilon_well * (s6 * s6 - s6)


def _check_positive(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0):
        raise InvalidArgumentError("Pair distance must be positive")
    return xi


def lj_potential(xi, spec: PotentialSpec, shifted: bool = False):
    """
    Lennard-Jones pair potential, zero beyond the cutoff.

    With shifted=True the value U(cutoff) is subtracted inside the cutoff,
    which is the convention total_energy uses.
    """
    scalar = np.ndim(xi) == 0
    xi = _check_positive(xi)
    u = _lj_raw(xi, spec)
    if shifted:
        u = u - spec.energy_shift
    u = np.where(xi <= spec.cutoff, u, 0.0)
    return float(u) if scalar else u


def lj_derivative(xi, spec: PotentialSpec, truncated: bool = True):
    """dU/dxi, cut sharply to zero beyond the cutoff when truncated"""
    scalar = np.ndim(xi) == 0
    xi = _check_positive(xi)
    s6 = (spec.sigma / xi) ** 6
    du = 4.0 * spec.epsilon_well * (6.0 * s6 - 12.0 * s6 * s6) / xi
    if truncated:
        du = np.where(xi <= spec.cutoff, du, 0.0)
    return float(du) if scalar else du


def minimal_image(d, L: float):
    return d - L * np.round(d / L)


def neighbor_gaps(state: ChainState) -> np.ndarray:
    """Minimal-image distance from each particle to its right neighbour"""
    return minimal_image(np.roll(state.q, -1) - state.q, state.L)


def _check_size(state: ChainState, spec: PotentialSpec) -> None:
    needed = 2 * spec.neighbor_count + 2
    if state.N < needed:
        raise InvalidArgumentError(
            f"N={state.N} is too small for {spec.neighbor_count} neighbours per side (need N >= {needed})")


def _bond_separations(state: ChainState, shift: int) -> np.ndarray:
    """Signed separation from particle i to particle i+shift"""
    r = minimal_image(np.roll(state.q, -shift) - state.q, state.L)
    close = np.abs(r) < COINCIDENCE_FRACTION * state.L
    if np.any(close):
        i = int(np.argmax(close))
        raise SingularityError((i, (i + shift) % state.N), float(abs(r[i])))
    return r


def net_forces(state: ChainState, spec: PotentialSpec) -> np.ndarray:
    """
    Net interaction force on every particle.

    Each bond (i, i+s) for s up to the neighbour count is visited once and
    its force added to one end and subtracted from the other.
    """
    _check_size(state, spec)
    forces = np.zeros(state.N)
    for shift in range(1, spec.neighbor_count + 1):
        r = _bond_separations(state, shift)
        # Force on i from i+shift is U'(|r|) * sign(r)
        bond = spec.force_scale * lj_derivative(np.abs(r), spec) * np.sign(r)
        forces += bond
        forces -= np.roll(bond, shift)
    return forces


def energy_components(state: ChainState, spec: PotentialSpec) -> Tuple[float, float, float]:
    """Kinetic, potential and total energy"""
    _check_size(state, spec)
    kinetic = 0.5 * state.particle_mass * float(np.sum(state.v ** 2))
    potential = 0.0
    for shift in range(1, spec.neighbor_count + 1):
        r = np.abs(_bond_separations(state, shift))
        potential += float(np.sum(lj_potential(r, spec, shifted=True)))
    potential *= spec.force_scale
    return kinetic, potential, kinetic + potential


def total_energy(state: ChainState, spec: PotentialSpec) -> float:
    return energy_components(state, spec)[2]


def _verlet(state: ChainState, forces: np.ndarray, dt: float,
            spec: PotentialSpec) -> Tuple[ChainState, np.ndarray]:
    inv_mass = 1.0 / state.particle_mass
    v_half = state.v + 0.5 * dt * inv_mass * forces
    moved = state.evolve(state.q + dt * v_half, v_half, state.t + dt)
    new_forces = net_forces(moved, spec)
    v_new = v_half + 0.5 * dt * inv_mass * new_forces
    return replace(moved, v=v_new), new_forces


def velocity_verlet_step(state: ChainState, dt: float, spec: PotentialSpec) -> ChainState:
    """One kick-drift-kick step"""
    if not dt > 0:
        raise InvalidArgumentError(f"Time step must be positive, got {dt}")
    new_state, _ = _verlet(state, net_forces(state, spec), dt, spec)
    return new_state


def _step_grid(dt: float, t_end: float) -> Tuple[int, float]:
    """Whole number of steps reaching t_end and the matching step size"""
    if t_end <= 0:
        return 0, dt
    steps = max(1, int(round(t_end / dt)))
    return steps, t_end / steps


def calibrate_dt(N: int, L: float, test_case, dt: float, spec: PotentialSpec,
                 horizon: float = 0.1, mass_total: float = 1.0,
                 tolerance: Optional[float] = None, max_halvings: Optional[int] = None) -> float:
    """
    Halve dt until a short pre-run keeps the relative energy deviation
    within tolerance, up to max_halvings times.
    """
    tolerance = config.energy_tolerance if tolerance is None else tolerance
    max_halvings = config.dt_max_halvings if max_halvings is None else max_halvings

    for attempt in range(max_halvings + 1):
        state = init_chain(N, L, test_case, mass_total)
        e0 = total_energy(state, spec)
        steps, step = _step_grid(dt, horizon)
        forces = net_forces(state, spec)
        worst = 0.0
        check_every = max(1, steps // 50)
        for k in range(1, steps + 1):
            state, forces = _verlet(state, forces, step, spec)
            if k % check_every == 0 or k == steps:
                worst = max(worst, abs(total_energy(state, spec) - e0))
        relative = worst / abs(e0) if e0 != 0 else worst
        if relative <= tolerance:
            if attempt:
                logger.warning(f"Time step reduced to {dt:.3e} after {attempt} halving(s) for N={N}")
            return dt
        if attempt < max_halvings:
            logger.info(f"Relative energy deviation {relative:.3e} exceeds {tolerance:.1e} at dt={dt:.3e}; halving")
            dt *= 0.5

    logger.warning(f"Energy tolerance {tolerance:.1e} not met after {max_halvings} halvings; using dt={dt:.3e}")
    return dt


def simulate(N: int, L: float, test_case, dt: float, t_end: float,
             sample_times: Iterable[float], spec: Optional[PotentialSpec] = None,
             mass_total: float = 1.0) -> Trajectory:
    """
    Integrate from the initial condition to t_end and record snapshots.

    The step size is adjusted so that t_end is reached after a whole number
    of steps; sample times are rounded to the nearest step.
    """
    spec = spec or PotentialSpec.for_lattice(N, L)
    times = sorted(set(float(t) for t in sample_times))
    if any(t < 0 or t > t_end + 1e-12 for t in times):
        raise InvalidArgumentError(f"Sample times must lie in [0, {t_end}]")

    steps, step = _step_grid(dt, t_end)
    wanted = sorted(set(int(round(t / step)) for t in times)) if steps else [0]
    if not times:
        wanted = [0]
    logger.info(f"Simulating {InitialCondition.from_name(test_case).value} chain N={N} "
                f"for {steps} steps of {step:.3e}")

    state = init_chain(N, L, test_case, mass_total)
    trajectory = Trajectory(dt=step, potential=spec)

    def record(current: ChainState, k: int) -> None:
        current = replace(current, t=k * step)
        trajectory.snapshots.append(current)
        trajectory.energy_trace.append((current.t, *energy_components(current, spec)))

    if wanted[0] == 0:
        record(state, 0)
    forces = net_forces(state, spec)
    pending = [k for k in wanted if k > 0]
    for k in range(1, (pending[-1] if pending else 0) + 1):
        state, forces = _verlet(state, forces, step, spec)
        if k == pending[0]:
            record(state, k)
            pending.pop(0)

    absolute, relative = trajectory.energy_deviation()
    logger.info(f"Trajectory done: {len(trajectory.snapshots)} snapshots, "
                f"energy deviation {absolute:.3e} ({relative:.2e} relative)")
    return trajectory


def export_trajectory(trajectory: Trajectory, path) -> None:
    trajectory.trajectory_frame().to_csv(path, index=False, float_format="%.16e")


def export_energy(trajectory: Trajectory, path) -> None:
    trajectory.energy_frame().to_csv(path, index=False, float_format="%.16e")
