"""
Exception hierarchy for the closure engine
"""

from typing import Optional, Sequence


class ClosureEngineError(Exception):
    """Base class for all closure engine failures"""


class InvalidArgumentError(ClosureEngineError, ValueError):
    """An argument is outside its documented domain"""


class ConfigError(ClosureEngineError):
    """Experiment configuration could not be parsed or validated"""


class GridMismatchError(ClosureEngineError):
    """Two fields were computed on different grids"""


class SingularityError(ClosureEngineError):
    """Two particles coincide and the pair force is singular"""

    def __init__(self, indices: Sequence[int], distance: float):
        self.indices = tuple(int(i) for i in indices)
        self.distance = float(distance)
        super().__init__(
            f"Coincident particles {self.indices[0]} and {self.indices[1]} "
            f"(distance {self.distance:.3e})"
        )


class OrderingError(ClosureEngineError):
    """Particle positions are not monotone along the ring"""

    def __init__(self, index: Optional[int] = None, message: str = ""):
        self.index = index
        super().__init__(message or f"Non-monotone positions at ring index {index}")


class DegenerateReconstructionError(ClosureEngineError):
    """Too many reconstructed nodes fell below the positivity floor"""

    def __init__(self, fraction: float, limit: float):
        self.fraction = float(fraction)
        self.limit = float(limit)
        super().__init__(
            f"Reconstruction clamped {100 * self.fraction:.1f}% of nodes "
            f"(limit {100 * self.limit:.0f}%)"
        )


class SvdFailureError(ClosureEngineError):
    """LAPACK did not converge for a convolution matrix"""

    def __init__(self, description: str, cause: Exception):
        self.description = description
        super().__init__(f"SVD failed for {description}: {cause}")


class ReportWriteError(ClosureEngineError):
    """A report file could not be written"""

    def __init__(self, path, cause: Exception):
        self.path = str(path)
        super().__init__(f"Could not write {self.path}: {cause}")
