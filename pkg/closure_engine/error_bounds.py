"""
A-priori error bounds for filtered deconvolution and for the interaction
stress computed from a reconstructed Jacobian.

The bounds for filtered solutions replace sums over singular values by
integrals of a continuous interpolant of the singular values. Both the
integral and the discrete sum are evaluated and the larger one is used, so
the bound stays valid for filter functions that are not monotone in the
index.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import integrate

from .chain_dynamics import PotentialSpec, lj_derivative
from .errors import InvalidArgumentError
from .regularization import FilterSpec, SvdFactors, filter_factor
from .window_functions import WindowKernel

logger = logging.getLogger(__name__)

PHI_GRID_POINTS = 100_000


class SingularInterpolant:
    """
    Continuous interpolant through (0, 1), (j, sigma_j), j = 1..D.

    Linear in log(sigma) between knots, with an exponential tail beyond D
    continuing the last log-slope.
    """

    def __init__(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        if sigma.size == 0:
            raise InvalidArgumentError("Need at least one singular value")
        if np.any(sigma <= 0) or np.any(sigma > 1.0 + 1e-6):
            raise InvalidArgumentError("Singular values must lie in (0, 1]")
        if np.any(np.diff(sigma) > 0):
            raise InvalidArgumentError("Singular values must be non-increasing")
        self.values = np.concatenate(([1.0], np.minimum(sigma, 1.0)))
        self.log_values = np.log(self.values)
        self.D = sigma.size
        slope = self.log_values[-1] - self.log_values[-2]
        self.tail_slope = slope if slope < 0 else -math.log(2.0)

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        t = np.asarray(t, dtype=float)
        inside = np.interp(np.minimum(t, self.D), np.arange(self.D + 1), self.log_values)
        tail = self.log_values[-1] + self.tail_slope * (t - self.D)
        result = np.exp(np.where(t > self.D, tail, inside))
        return float(result) if scalar else result

    def crossing(self, level: float) -> List[float]:
        """Points in (0, D + 1) where the interpolant passes through level"""
        target = math.log(level)
        points = []
        for j in range(self.D):
            a, b = self.log_values[j], self.log_values[j + 1]
            if min(a, b) < target < max(a, b):
                points.append(j + (target - a) / (b - a))
        tail_point = self.D + (target - self.log_values[-1]) / self.tail_slope
        if self.D < tail_point < self.D + 1:
            points.append(tail_point)
        return points


@dataclass
class BoundInputs:
    svd: SvdFactors
    filter: FilterSpec
    p: float = 2.0
    q: Optional[float] = None
    x_inf: float = 0.0
    delta_inf: float = 0.0
    D: Optional[int] = None
    x_vector: Optional[np.ndarray] = None
    delta_vector: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.p >= 1 or math.isinf(self.p):
            raise InvalidArgumentError(f"Norm exponent p must lie in [1, inf), got {self.p}")
        if self.q is not None and not self.q >= 1:
            raise InvalidArgumentError(f"Holder exponent q must be >= 1, got {self.q}")
        if self.x_inf < 0 or self.delta_inf < 0:
            raise InvalidArgumentError("Norms must be non-negative")
        if self.D is None:
            self.D = self.svd.rank
        if not 1 <= self.D <= self.svd.rank:
            raise InvalidArgumentError(f"D must lie in [1, {self.svd.rank}], got {self.D}")

    @property
    def sigma(self) -> np.ndarray:
        return self.svd.sigma[: self.D]


def coefficient_constant(svd: SvdFactors, D: int) -> float:
    """
    Operator norm bound for maps between vectors and their singular
    coefficients: the larger of the 1->1 and inf->inf norms of U^T and V^T.
    Interpolation makes it valid for every p-norm.
    """
    norms = []
    for vectors in (svd.U[:, :D], svd.V[:, :D]):
        magnitudes = np.abs(vectors)
        norms.append(float(np.max(np.sum(magnitudes, axis=0))))
        norms.append(float(np.max(np.sum(magnitudes, axis=1))))
    return max(norms)


def synthesis_constant(svd: SvdFactors, D: int, p: float) -> float:
    """D^(1 - 1/p) * max_j ||xi_hat_j||_p"""
    columns = np.abs(svd.V[:, :D])
    column_norms = np.sum(columns ** p, axis=0) ** (1.0 / p)
    return D ** max(0.0, 1.0 - 1.0 / p) * float(np.max(column_norms))


def _lp_norm(integrand, interpolant: SingularInterpolant, sigma: np.ndarray,
             exponent: float, breakpoints: List[float]) -> float:
    """
    max of the L^exponent norm of integrand(f(t)) on (0, D+1) and the
    l^exponent norm of integrand(sigma_j).
    """
    D = interpolant.D
    points = sorted(set(float(p) for p in breakpoints if 0 < p < D + 1))

    def power(t):
        return abs(float(integrand(interpolant(t)))) ** exponent

    total = 0.0
    for j in range(D + 1):
        inner = [p for p in points if j < p < j + 1]
        value, _ = integrate.quad(power, j, j + 1, points=inner or None, limit=200)
        total += value
    integral = total ** (1.0 / exponent)

    discrete = float(np.sum(np.abs(integrand(sigma)) ** exponent)) ** (1.0 / exponent)
    return max(integral, discrete)


def _filter_norms(inputs: BoundInputs, exponent: float):
    interpolant = SingularInterpolant(inputs.sigma)
    spec = inputs.filter
    breakpoints = interpolant.crossing(spec.cut) if spec.variant == "tsvd" and spec.cut > 0 else []

    def residual(s):
        return 1.0 - filter_factor(spec, s)

    def amplification(s):
        return filter_factor(spec, s) / s

    bias = _lp_norm(residual, interpolant, inputs.sigma, exponent, breakpoints)
    noise = _lp_norm(amplification, interpolant, inputs.sigma, exponent, breakpoints)
    if not math.isfinite(noise):
        logger.warning(f"Noise amplification integral diverges for {spec.label}")
        noise = math.inf
    return bias, noise


def filtered_error_bound(inputs: BoundInputs) -> float:
    """C1 * (||x||_inf * ||1 - phi(f)||_p + ||b - b_delta||_inf * ||phi(f)/f||_p)"""
    bias, noise = _filter_norms(inputs, inputs.p)
    constant = synthesis_constant(inputs.svd, inputs.D, inputs.p) * coefficient_constant(inputs.svd, inputs.D)
    bound = constant * (inputs.x_inf * bias + (inputs.delta_inf * noise if inputs.delta_inf else 0.0))
    logger.debug(f"Filtered bound {bound:.3e} for {inputs.filter.label}, p={inputs.p}, D={inputs.D}")
    return bound


def holder_error_bound(inputs: BoundInputs) -> float:
    """Same bound with Holder exponents (q, q') splitting data and filter norms"""
    if inputs.q is None or not inputs.q > 1:
        raise InvalidArgumentError(f"Holder bound needs q > 1, got {inputs.q}")
    if inputs.x_vector is None or inputs.delta_vector is None:
        raise InvalidArgumentError("Holder bound needs the vectors x and b - b_delta")
    q = inputs.q
    q_conjugate = q / (q - 1.0)
    pq = inputs.p * q
    x_norm = float(np.sum(np.abs(inputs.x_vector) ** pq) ** (1.0 / pq))
    delta_norm = float(np.sum(np.abs(inputs.delta_vector) ** pq) ** (1.0 / pq))

    bias, noise = _filter_norms(inputs, inputs.p * q_conjugate)
    constant = synthesis_constant(inputs.svd, inputs.D, inputs.p) * coefficient_constant(inputs.svd, inputs.D)
    return constant * (x_norm * bias + (delta_norm * noise if delta_norm else 0.0))


def phi_sup(spec: PotentialSpec, r_min: float, r_max: float) -> float:
    """sup |U'(r) r| on [r_min, r_max]"""
    if not 0 < r_min <= r_max:
        raise InvalidArgumentError(f"Need 0 < r_min <= r_max, got {r_min}, {r_max}")
    r = np.linspace(r_min, r_max, PHI_GRID_POINTS) if r_max > r_min else np.array([r_min])
    return float(np.max(np.abs(lj_derivative(r, spec, truncated=False) * r)))


def discrete_l1(values, L: float = 1.0) -> float:
    values = np.asarray(values, dtype=float)
    return float(L / values.size * np.sum(np.abs(values)))


def interaction_stress_bound(J, Q, kernel: WindowKernel, spec: PotentialSpec,
                             M_bound: float, r_min: float) -> float:
    """
    sup psi_eta * sup |U'(r) r| * (2 M ||J - Q||_1 + ||J - Q||_1^2) over the
    shell [r_min, cutoff].
    """
    J = np.asarray(J, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if J.shape != Q.shape:
        raise InvalidArgumentError(f"J and Q differ in shape: {J.shape} vs {Q.shape}")
    if M_bound < np.max(J):
        raise InvalidArgumentError(f"M_bound={M_bound} is below max(J)={np.max(J)}")
    l1 = discrete_l1(J - Q, kernel.L)
    return kernel.peak * phi_sup(spec, r_min, max(r_min, spec.cutoff)) * (2.0 * M_bound * l1 + l1 * l1)
