"""
Experiment orchestration: simulate, average, deconvolve, reconstruct and
compare against directly computed stresses, for single configurations and
for sweeps over window, eta, N and regularization settings.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .chain_dynamics import PotentialSpec, Trajectory, calibrate_dt, init_chain, simulate
from .closure import ReconstructedFields, approximate_stresses, reconstruct
from .config import ExperimentConfig
from .error_bounds import (BoundInputs, filtered_error_bound, holder_error_bound,
                           interaction_stress_bound)
from .errors import ClosureEngineError
from .meso_averages import (FineFields, MesoFields, MesoGrid, compute_meso_fields,
                            exact_recoverables)
from .regularization import ConvolutionSystem, FilterSpec, build_system, singular_value_table
from .spectral_analyzer import gibbs_overshoot, spectrum_frame, spectrum_report
from .window_functions import WindowKernel

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "t", "energy",
    "J_abs", "J_rel", "v_abs", "v_rel",
    "Tc_abs", "Tc_rel", "Tint_abs", "Tint_rel",
    "retained_rank", "clamped_fraction", "floored_nodes",
    "J_overshoot", "v_overshoot",
]

BOUND_COLUMNS = ["t", "bound_e13", "bound_e14", "bound_theorem", "observed_error_Tint", "ratio"]

# Shell radius is the smallest observed pair distance less this fraction
SHELL_MARGIN = 0.05


def relative_error(exact, approx) -> Tuple[float, Optional[float]]:
    """
    l-infinity error and l-infinity relative error.

    The relative error is None when the exact field is identically zero.
    """
    exact = np.asarray(exact, dtype=float)
    approx = np.asarray(approx, dtype=float)
    if exact.shape != approx.shape:
        raise ValueError(f"Fields differ in shape: {exact.shape} vs {approx.shape}")
    absolute = float(np.max(np.abs(exact - approx))) if exact.size else 0.0
    scale = float(np.max(np.abs(exact))) if exact.size else 0.0
    return absolute, (absolute / scale if scale > 0 else None)


@dataclass
class SnapshotResult:
    meso: MesoFields
    fine: FineFields
    reconstruction: ReconstructedFields
    stress_conv_approx: np.ndarray
    stress_int_approx: np.ndarray

    def meso_frame(self, grid: MesoGrid) -> pd.DataFrame:
        frame = self.meso.to_frame(grid)
        frame["stress_conv_approx"] = self.stress_conv_approx
        frame["stress_int_approx"] = self.stress_int_approx
        return frame


@dataclass
class ErrorReport:
    metadata: Dict[str, Any]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    error: Optional[str] = None
    snapshots: List[SnapshotResult] = field(default_factory=list)

    @property
    def label(self) -> str:
        m = self.metadata
        label = (f"{m['test_case']}_{_tag(m['window'])}_eta{_tag(m['eta'])}_N{_tag(m['N'])}"
                 f"_B{m['B']}_Nf{_tag(m['Nfine'])}")
        if m.get("filter", "tsvd") != "tsvd" or m.get("variant_tag"):
            label += f"_{m.get('variant_tag') or m['filter']}"
        return label

    @property
    def succeeded(self) -> bool:
        return self.error is None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=REPORT_COLUMNS)

    def series(self, column: str) -> np.ndarray:
        return np.array([row[column] if row[column] is not None else np.nan for row in self.rows], dtype=float)

    def to_dict(self) -> Dict[str, Any]:
        return {"label": self.label, "metadata": self.metadata, "rows": self.rows, "error": self.error}


@dataclass
class SpectraResult:
    t: float
    frames: Dict[str, pd.DataFrame]
    k_match: Dict[str, int]
    singular_values: List[Tuple[int, float]]


class ExperimentRunner:
    """Runs closure experiments and sweeps with a shared trajectory cache"""

    def __init__(self, progress_callback: Optional[Callable[[Dict[str, Any]], None]] = None,
                 keep_fields: bool = False, calibrate: bool = True):
        self.progress_callback = progress_callback
        self.keep_fields = keep_fields
        self.calibrate = calibrate
        self._trajectories: Dict[Tuple, Trajectory] = {}
        self._locks: Dict[Tuple, threading.Lock] = {}
        self._lock = threading.Lock()

    def _emit(self, stage: str, progress: float, label: str = "", **extra) -> None:
        if self.progress_callback is None:
            return
        try:
            self.progress_callback({"stage": stage, "progress": progress, "label": label, **extra})
        except Exception as e:
            logger.warning(f"Progress callback failed: {str(e)}")

    # Building blocks

    @staticmethod
    def potential(experiment: ExperimentConfig) -> PotentialSpec:
        return PotentialSpec.for_lattice(int(experiment.N), experiment.L,
                                         experiment.well_depth(), experiment.cutoff())

    @staticmethod
    def grid(experiment: ExperimentConfig) -> MesoGrid:
        return MesoGrid(B=experiment.B, Nf=experiment.fine_count(), L=experiment.L)

    @staticmethod
    def kernel(experiment: ExperimentConfig) -> WindowKernel:
        return WindowKernel(experiment.window, L=experiment.L, eta=float(experiment.eta))

    @staticmethod
    def filter_spec(experiment: ExperimentConfig) -> FilterSpec:
        return FilterSpec.from_dict(experiment.filter)

    def system(self, experiment: ExperimentConfig) -> ConvolutionSystem:
        spec = self.filter_spec(experiment)
        return build_system(self.kernel(experiment), self.grid(experiment), spec.cut, experiment.tolerance())

    def trajectory(self, experiment: ExperimentConfig) -> Trajectory:
        """Simulated trajectory, shared by every run with the same dynamics"""
        key = (experiment.test_case, int(experiment.N), experiment.time_step(), experiment.t_end,
               tuple(experiment.times()), experiment.L, experiment.M,
               experiment.well_depth(), experiment.cutoff())
        with self._lock:
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            cached = self._trajectories.get(key)
            if cached is not None:
                return cached
            potential = self.potential(experiment)
            dt = experiment.time_step()
            if self.calibrate:
                dt = calibrate_dt(int(experiment.N), experiment.L, experiment.test_case, dt, potential,
                                  horizon=min(experiment.t_end, 0.1), mass_total=experiment.M)
            trajectory = simulate(int(experiment.N), experiment.L, experiment.test_case, dt,
                                  experiment.t_end, experiment.times(), potential, experiment.M)
            self._trajectories[key] = trajectory
            return trajectory

    def metadata(self, experiment: ExperimentConfig, system: Optional[ConvolutionSystem] = None) -> Dict[str, Any]:
        spec = self.filter_spec(experiment)
        return {
            "test_case": experiment.test_case,
            "window": str(experiment.window),
            "eta": float(experiment.eta),
            "N": int(experiment.N),
            "B": experiment.B,
            "Nfine": experiment.fine_count(),
            "L": experiment.L,
            "filter": spec.variant,
            "filter_label": spec.label,
            "sigma_cut": spec.cut,
            "rhs_tol": experiment.tolerance(),
            "retained_rank": system.retained_rank if system is not None else None,
        }

    @staticmethod
    def raw_metadata(experiment: ExperimentConfig) -> Dict[str, Any]:
        """Configuration values as given, for reports of runs that fail early"""
        return {
            "test_case": experiment.test_case,
            "window": experiment.window,
            "eta": experiment.eta,
            "N": experiment.N,
            "B": experiment.B,
            "Nfine": experiment.Nfine if experiment.Nfine is not None else experiment.N,
            "L": experiment.L,
            "filter": (experiment.filter or {}).get("variant", "tsvd"),
            "retained_rank": None,
        }

    @staticmethod
    def centroid(experiment: ExperimentConfig, t: float) -> float:
        """Mean particle position at time t, moving with the conserved mean velocity"""
        initial = init_chain(int(experiment.N), experiment.L, experiment.test_case, experiment.M)
        return float(np.mean(initial.q) + np.mean(initial.v) * t)

    def close_snapshot(self, experiment: ExperimentConfig, system: ConvolutionSystem,
                       trajectory: Trajectory, t: float) -> SnapshotResult:
        """Averages, exact fields, reconstruction and approximate stresses at one time"""
        state = trajectory.state_at(t)
        potential = self.potential(experiment)
        meso = compute_meso_fields(state, system.kernel, system.grid, potential)
        fine = exact_recoverables(state, system.grid)
        reconstruction = reconstruct(system, meso, state.N, experiment.M, self.filter_spec(experiment),
                                     self.centroid(experiment, state.t))
        stress_conv, stress_int = approximate_stresses(
            reconstruction.q_approx, reconstruction.v_particles, system.kernel, system.grid,
            potential, experiment.M, state.t)
        return SnapshotResult(meso, fine, reconstruction, stress_conv, stress_int)

    # Operations

    def run_experiment(self, experiment: ExperimentConfig) -> ErrorReport:
        """
        Full pipeline at every sample time. Failures are recorded on the
        report rather than raised.
        """
        report = ErrorReport(metadata=self.raw_metadata(experiment))
        try:
            report.metadata = self.metadata(experiment)
            system = self.system(experiment)
            report.metadata = self.metadata(experiment, system)
            label = report.label
            logger.info(f"Running {label} (retained rank {system.retained_rank})")
            self._emit("started", 0.0, label)

            trajectory = self.trajectory(experiment)
            energies = {round(e[0], 12): e[3] for e in trajectory.energy_trace}
            times = trajectory.times

            for index, t in enumerate(times):
                snapshot = self.close_snapshot(experiment, system, trajectory, t)
                report.rows.append(self._error_row(t, energies.get(round(t, 12)), snapshot, system))
                if self.keep_fields:
                    report.snapshots.append(snapshot)
                self._emit("snapshot", (index + 1) / len(times), label, t=t)

            self._emit("completed", 1.0, label)
            logger.info(f"Finished {label}: {len(report.rows)} snapshots")

        except ClosureEngineError as e:
            logger.error(f"Experiment {report.label} failed: {str(e)}")
            report.error = str(e)
            self._emit("failed", 1.0, report.label, error=str(e))
        except Exception as e:
            logger.error(f"Unexpected error in experiment {report.label}: {str(e)}")
            report.error = f"{type(e).__name__}: {str(e)}"
            self._emit("failed", 1.0, report.label, error=str(e))

        return report

    @staticmethod
    def _error_row(t: float, energy: Optional[float], snapshot: SnapshotResult,
                   system: ConvolutionSystem) -> Dict[str, Any]:
        reconstruction = snapshot.reconstruction
        J_abs, J_rel = relative_error(snapshot.fine.J_exact, reconstruction.J_approx)
        v_abs, v_rel = relative_error(snapshot.fine.v_exact, reconstruction.v_approx)
        Tc_abs, Tc_rel = relative_error(snapshot.meso.stress_conv, snapshot.stress_conv_approx)
        Tint_abs, Tint_rel = relative_error(snapshot.meso.stress_int, snapshot.stress_int_approx)
        return {
            "t": t,
            "energy": energy,
            "J_abs": J_abs, "J_rel": J_rel,
            "v_abs": v_abs, "v_rel": v_rel,
            "Tc_abs": Tc_abs, "Tc_rel": Tc_rel,
            "Tint_abs": Tint_abs, "Tint_rel": Tint_rel,
            "retained_rank": system.retained_rank,
            "clamped_fraction": reconstruction.clamped_fraction,
            "floored_nodes": snapshot.meso.floored_count,
            "J_overshoot": gibbs_overshoot(snapshot.fine.J_exact, reconstruction.J_approx),
            "v_overshoot": gibbs_overshoot(snapshot.fine.v_exact, reconstruction.v_approx),
        }

    def run_all(self, experiments: Sequence[ExperimentConfig], workers: Optional[int] = None) -> List[ErrorReport]:
        """Run configurations concurrently; reports keep the input order"""
        if not experiments:
            return []
        workers = workers or experiments[0].worker_count()
        if workers <= 1 or len(experiments) == 1:
            return [self.run_experiment(e) for e in experiments]
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(self.run_experiment, experiments))

    def _sweep(self, experiment: ExperimentConfig, key: str) -> List[ErrorReport]:
        """Every list axis is expanded; the swept key names the sweep in the log"""
        runs = experiment.expand()
        values = list(dict.fromkeys(str(getattr(run, key)) for run in runs))
        logger.info(f"Sweeping {key} over {values} ({len(runs)} runs)")
        return self.run_all(runs)

    def sweep_window(self, experiment: ExperimentConfig) -> List[ErrorReport]:
        return self._sweep(experiment, "window")

    def sweep_eta(self, experiment: ExperimentConfig) -> List[ErrorReport]:
        return self._sweep(experiment, "eta")

    def sweep_scale(self, experiment: ExperimentConfig) -> List[ErrorReport]:
        return self._sweep(experiment, "N")

    def sweep_regularization(self, experiment: ExperimentConfig, sigma_cuts: Sequence[float],
                             rhs_tols: Sequence[float]) -> List[ErrorReport]:
        """One run per (sigma_cut, rhs_tol) pair with the configured filter variant"""
        runs = []
        for single in experiment.expand():
            for sigma_cut in sigma_cuts:
                for rhs_tol in rhs_tols:
                    settings = {**(single.filter or {}), "sigma_cut": sigma_cut}
                    runs.append(replace(single, filter=settings, rhs_tol=rhs_tol))
        reports = self.run_all(runs)
        for run, report in zip(runs, reports):
            report.metadata["variant_tag"] = f"cut{run.filter['sigma_cut']:g}_tol{run.rhs_tol:g}"
        return reports

    def spectra_report(self, experiment: ExperimentConfig, t: float = 0.9) -> SpectraResult:
        """Exact and reconstructed spectra of J, v, T_c and T_int at time t"""
        system = self.system(experiment)
        trajectory = self.trajectory(experiment.with_overrides(sample_times=_with_time(experiment, t)))
        snapshot = self.close_snapshot(experiment, system, trajectory, t)
        pairs = {
            "jacobian": (snapshot.fine.J_exact, snapshot.reconstruction.J_approx),
            "velocity": (snapshot.fine.v_exact, snapshot.reconstruction.v_approx),
            "stress_conv": (snapshot.meso.stress_conv, snapshot.stress_conv_approx),
            "stress_int": (snapshot.meso.stress_int, snapshot.stress_int_approx),
        }
        frames, k_match = {}, {}
        for name, (exact, approx) in pairs.items():
            exact_table, approx_table, k_match[name] = spectrum_report(exact, approx)
            frames[name] = spectrum_frame(exact_table, approx_table)
        logger.info(f"Spectra at t={t}: matched modes {k_match}")
        return SpectraResult(t=t, frames=frames, k_match=k_match, singular_values=singular_value_table(system))

    def bounds_report(self, experiment: ExperimentConfig, p: float = 2.0, q: float = 2.0) -> pd.DataFrame:
        """
        Filtered-solution bounds for the Jacobian and the interaction-stress
        bound next to the observed interaction-stress error at each sample time.
        """
        system = self.system(experiment)
        trajectory = self.trajectory(experiment)
        potential = self.potential(experiment)
        spec = self.filter_spec(experiment)
        r_min = (1.0 - SHELL_MARGIN) * trajectory.min_pair_distance()
        scale = experiment.L / experiment.M

        rows = []
        for t in trajectory.times:
            snapshot = self.close_snapshot(experiment, system, trajectory, t)
            J = snapshot.fine.J_exact
            delta = scale * snapshot.meso.density - system.A @ J
            inputs = BoundInputs(svd=system.svd, filter=spec, p=p, q=q,
                                 x_inf=float(np.max(np.abs(J))), delta_inf=float(np.max(np.abs(delta))),
                                 x_vector=J, delta_vector=delta)
            stress_bound = interaction_stress_bound(J, snapshot.reconstruction.J_approx, system.kernel,
                                                  potential, float(np.max(J)), r_min)
            observed, _ = relative_error(snapshot.meso.stress_int, snapshot.stress_int_approx)
            rows.append({
                "t": t,
                "bound_e13": filtered_error_bound(inputs),
                "bound_e14": holder_error_bound(inputs),
                "bound_theorem": stress_bound,
                "observed_error_Tint": observed,
                "ratio": stress_bound / observed if observed > 0 else None,
            })
            logger.info(f"Bounds at t={t:g}: stress bound {stress_bound:.3e}, observed {observed:.3e}")
        return pd.DataFrame(rows, columns=BOUND_COLUMNS)


def _tag(value) -> str:
    if isinstance(value, (list, tuple)):
        return "-".join(_tag(v) for v in value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def _with_time(experiment: ExperimentConfig, t: float) -> List[float]:
    times = experiment.times()
    if not any(abs(s - t) < 1e-12 for s in times):
        times = sorted(times + [t])
    return times
