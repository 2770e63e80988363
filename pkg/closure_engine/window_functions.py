"""
Window functions used to define Hardy-Murdoch averages.

Six kernels of increasing smoothness are provided, from the characteristic
function of an interval to the Gaussian. Every kernel is normalised to unit
mass on the real line and rescaled with the resolution parameter eta as
psi_eta(x) = psi(x / eta) / eta.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np
from scipy import integrate
from scipy.special import erf

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

# Panels used by the composite Simpson rule in condition checks
QUADRATURE_PANELS = 2 ** 17

# Gaussian reach in standard deviations for periodic image sums
GAUSSIAN_REACH_SIGMAS = 10.0


class WindowKind(Enum):
    CHARACTERISTIC = "char"
    TRAPEZOID = "trapezoid"
    TRIANGLE = "triangle"
    QUADRATIC = "quadratic"
    QUARTIC = "quartic"
    GAUSSIAN = "gaussian"

    @classmethod
    def from_name(cls, name) -> "WindowKind":
        """Resolve a config string such as "gaussian" or "characteristic" to a kind"""
        if isinstance(name, WindowKind):
            return name
        key = str(name).strip().lower()
        if key in _ALIASES:
            return _ALIASES[key]
        for kind in cls:
            if kind.value == key:
                return kind
        raise InvalidArgumentError(f"Unknown window function: {name!r}")

    @property
    def index(self) -> int:
        """Position 1..6 in order of increasing smoothness"""
        return list(WindowKind).index(self) + 1

    @property
    def is_compact(self) -> bool:
        return self is not WindowKind.GAUSSIAN


_ALIASES: Dict[str, WindowKind] = {
    "characteristic": WindowKind.CHARACTERISTIC,
}


def _check_length(L: float) -> None:
    if not (L > 0 and math.isfinite(L)):
        raise InvalidArgumentError(f"Box length must be positive, got {L}")


def support_halfwidth(kind: WindowKind, L: float) -> float:
    """Half-width of the unscaled support (infinite for the Gaussian)"""
    if kind is WindowKind.GAUSSIAN:
        return math.inf
    if kind is WindowKind.TRAPEZOID:
        return 1.5 * L
    return 0.5 * L


def breakpoints(kind: WindowKind, L: float) -> List[float]:
    """Points where the unscaled kernel loses smoothness"""
    if kind is WindowKind.GAUSSIAN:
        return []
    if kind is WindowKind.TRAPEZOID:
        return [-1.5 * L, -0.5 * L, 0.5 * L, 1.5 * L]
    if kind is WindowKind.TRIANGLE:
        return [-0.5 * L, 0.0, 0.5 * L]
    return [-0.5 * L, 0.5 * L]


def _as_output(values: np.ndarray, scalar: bool):
    return float(values) if scalar else values


def eval_window(kind: WindowKind, x, L: float):
    """
    Evaluate the unscaled window psi^(kind)(x) on a box of length L.

    Compact kernels vanish outside their support; the Gaussian has standard
    deviation L/6. The trapezoid is the continuous unit-mass trapezoid with
    plateau 1/(2L) on |x| <= L/2 and linear flanks reaching zero at 3L/2.
    """
    _check_length(L)
    kind = WindowKind.from_name(kind)
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    half = 0.5 * L

    if kind is WindowKind.CHARACTERISTIC:
        values = np.where(ax <= half, 1.0 / L, 0.0)
    elif kind is WindowKind.TRAPEZOID:
        flank = (1.5 * L - ax) / (2.0 * L * L)
        values = np.where(ax <= half, 1.0 / (2.0 * L), np.where(ax <= 1.5 * L, flank, 0.0))
    elif kind is WindowKind.TRIANGLE:
        values = np.where(ax <= half, 4.0 / L ** 2 * (half - ax), 0.0)
    elif kind is WindowKind.QUADRATIC:
        values = np.where(ax < half, -6.0 / L ** 3 * (x * x - half * half), 0.0)
    elif kind is WindowKind.QUARTIC:
        values = np.where(ax <= half, 30.0 / L ** 5 * (x * x - half * half) ** 2, 0.0)
    else:
        values = 6.0 / (L * math.sqrt(2.0 * math.pi)) * np.exp(-18.0 * x * x / (L * L))

    return _as_output(values, scalar)


def window_cdf(kind: WindowKind, x, L: float):
    """Antiderivative of the unscaled window from -infinity to x"""
    _check_length(L)
    kind = WindowKind.from_name(kind)
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    half = 0.5 * L

    if kind is WindowKind.GAUSSIAN:
        sigma = L / 6.0
        return _as_output(0.5 * (1.0 + erf(x / (sigma * math.sqrt(2.0)))), scalar)

    # G(a) is the mass on [0, a]; every kernel is even
    if kind is WindowKind.CHARACTERISTIC:
        g = np.minimum(a, half) / L
    elif kind is WindowKind.TRAPEZOID:
        inner = np.minimum(a, half) / (2.0 * L)
        b = np.clip(a, half, 1.5 * L)
        outer = (1.5 * L * (b - half) - 0.5 * (b * b - half * half)) / (2.0 * L * L)
        g = inner + outer
    elif kind is WindowKind.TRIANGLE:
        b = np.minimum(a, half)
        g = 4.0 / L ** 2 * (half * b - 0.5 * b * b)
    elif kind is WindowKind.QUADRATIC:
        b = np.minimum(a, half)
        g = 6.0 / L ** 3 * (half * half * b - b ** 3 / 3.0)
    else:
        b = np.minimum(a, half)
        g = 30.0 / L ** 5 * (b ** 5 / 5.0 - b ** 3 * L * L / 6.0 + b * L ** 4 / 16.0)

    return _as_output(0.5 + np.sign(x) * g, scalar)


@dataclass(frozen=True)
class WindowKernel:
    """A window function rescaled by the resolution parameter eta"""

    kind: WindowKind
    L: float = 1.0
    eta: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", WindowKind.from_name(self.kind))
        _check_length(self.L)
        if not (0.0 < self.eta < 1.0):
            raise InvalidArgumentError(f"Resolution parameter eta must lie in (0, 1), got {self.eta}")

    @property
    def label(self) -> str:
        return f"{self.kind.value}(eta={self.eta:g})"

    @property
    def reach(self) -> float:
        """Distance beyond which the scaled kernel is zero or negligible"""
        if self.kind is WindowKind.GAUSSIAN:
            return GAUSSIAN_REACH_SIGMAS * self.eta * self.L / 6.0
        return self.eta * support_halfwidth(self.kind, self.L)

    @property
    def image_count(self) -> int:
        """Number of periodic images on each side needed to cover the reach"""
        return int(math.floor((self.reach + 0.5 * self.L) / self.L))

    @property
    def peak(self) -> float:
        """sup |psi_eta| on the periodic box"""
        samples = np.linspace(-0.5 * self.L, 0.5 * self.L, 4097)
        return float(max(self.periodic(0.0), np.max(self.periodic(samples))))

    def __call__(self, x):
        return eval_scaled(self, x)

    def cdf(self, x):
        return window_cdf(self.kind, np.asarray(x, dtype=float) / self.eta, self.L)

    def periodic(self, d):
        """Periodic image sum of psi_eta at separations d"""
        scalar = np.ndim(d) == 0
        d = np.asarray(d, dtype=float)
        d = d - self.L * np.round(d / self.L)
        total = eval_scaled(self, d)
        for n in range(1, self.image_count + 1):
            total = total + eval_scaled(self, d + n * self.L) + eval_scaled(self, d - n * self.L)
        return _as_output(total, scalar)

    def segment_integral(self, lo, length):
        """
        Integral of the periodic kernel over [lo, lo + length].

        Exact for every kind since it differences the closed-form
        antiderivative over all contributing images.
        """
        lo = np.asarray(lo, dtype=float)
        length = np.asarray(length, dtype=float)
        lo = lo - self.L * np.round(lo / self.L)
        hi = lo + length
        total = self.cdf(hi) - self.cdf(lo)
        for n in range(1, self.image_count + 2):
            shift = n * self.L
            total = total + (self.cdf(hi + shift) - self.cdf(lo + shift))
            total = total + (self.cdf(hi - shift) - self.cdf(lo - shift))
        return total


def eval_scaled(kernel: WindowKernel, x):
    """psi_eta(x) = psi(x / eta) / eta"""
    scalar = np.ndim(x) == 0
    values = np.asarray(eval_window(kernel.kind, np.asarray(x, dtype=float) / kernel.eta, kernel.L)) / kernel.eta
    return _as_output(values, scalar)


@dataclass(frozen=True)
class ConditionReport:
    kind: WindowKind
    nonnegative: bool
    unit_mass: bool
    decays: bool
    max_at_zero: bool
    mass: float

    def to_dict(self) -> Dict[str, object]:
        return {
            "window": self.kind.value,
            "nonnegative": self.nonnegative,
            "unit_mass": self.unit_mass,
            "decays": self.decays,
            "max_at_zero": self.max_at_zero,
            "mass": self.mass,
        }


def window_mass(kind: WindowKind, L: float = 1.0, panels: int = QUADRATURE_PANELS) -> float:
    """
    Mass of the unscaled window by composite Simpson quadrature.

    The panels are split across the smooth pieces between breakpoints so
    that kinks and jumps always sit on panel boundaries.
    """
    kind = WindowKind.from_name(kind)
    lo, hi = -2.0 * L, 2.0 * L
    edges = [lo] + [b for b in breakpoints(kind, L) if lo < b < hi] + [hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(2, int(round(panels * (b - a) / (hi - lo))))
        n += n % 2
        # Nudge away from the edges so one-sided limits are sampled
        xs = np.linspace(a, b, n + 1)
        inner = xs.copy()
        inner[0] = a + 1e-15 * L
        inner[-1] = b - 1e-15 * L
        total += integrate.simpson(eval_window(kind, inner, L), x=xs)
    return float(total)


def verify_conditions(kind: WindowKind, L: float = 1.0) -> ConditionReport:
    """Check non-negativity, unit mass, decay and a strict maximum at zero"""
    kind = WindowKind.from_name(kind)
    xs = np.linspace(-2.0 * L, 2.0 * L, 40001)
    values = eval_window(kind, xs, L)
    peak = float(eval_window(kind, 0.0, L))

    mass = window_mass(kind, L)
    off_zero = values[np.abs(xs) > 1e-12 * L]
    far = values[np.abs(xs) >= 1.99 * L]

    report = ConditionReport(
        kind=kind,
        nonnegative=bool(np.all(values >= 0.0)),
        unit_mass=abs(mass - 1.0) <= 1e-10,
        decays=bool(np.all(far <= 1e-12 * peak)),
        max_at_zero=bool(np.all(off_zero < peak)),
        mass=mass,
    )
    logger.debug(f"Window conditions for {kind.value}: {report.to_dict()}")
    return report


def scaled_mass(kernel: WindowKernel) -> Tuple[float, float]:
    """
    Mass of psi_eta on the line and of its periodic version on one box.

    The first value uses the closed-form antiderivative; the second a
    midpoint rule on 2^15 nodes, accurate to about one node spacing times
    the peak height for kernels with jumps.
    """
    reach = kernel.reach if math.isfinite(kernel.reach) else kernel.L
    line = float(kernel.cdf(reach + kernel.L) - kernel.cdf(-reach - kernel.L))
    nodes = (np.arange(2 ** 15) + 0.5) * kernel.L / 2 ** 15 - 0.5 * kernel.L
    box = float(np.sum(kernel.periodic(nodes)) * kernel.L / 2 ** 15)
    return line, box


def kernel_cdf(kernel: WindowKernel, x):
    """Antiderivative of psi_eta from -infinity to x"""
    return kernel.cdf(x)


def eval_periodic(kernel: WindowKernel, d, L: float = None):
    """Periodic image sum of psi_eta; L defaults to the kernel's box"""
    if L is not None and not math.isclose(L, kernel.L):
        raise InvalidArgumentError(f"Kernel box {kernel.L} does not match L={L}")
    return kernel.periodic(d)
