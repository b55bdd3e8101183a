"""Least-squares convergence slopes on log-log data"""
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from homlab.utils.enhanced_logging import get_logger
from homlab.utils.error_handling import DegenerateFitError

logger = get_logger(__name__)

# errors at or below this are solver round-off, not discretization error
ROUNDOFF_ERROR = 1e-10


@dataclass(frozen=True)
class SlopeFit:
    slope: Optional[float]
    intercept: Optional[float]
    residual: float
    points: int

    @property
    def at_roundoff(self) -> bool:
        return self.slope is None

    def to_dict(self):
        return {
            'slope': self.slope,
            'intercept': self.intercept,
            'fit_residual': self.residual,
            'points': self.points,
            'at_roundoff': self.at_roundoff,
        }


def fit_slope(steps: Sequence[float], errors: Sequence[float], label: str = 'error') -> SlopeFit:
    """Slope p of log e = p log eps + q by ordinary least squares.

    An error series entirely at round-off has no meaningful slope and is
    reported as such instead of fitting noise.
    """
    steps = np.asarray(steps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if steps.shape != errors.shape:
        raise DegenerateFitError(f"{label}: {steps.size} steps but {errors.size} errors")
    if steps.size < 3:
        raise DegenerateFitError(f"{label}: a slope fit needs at least 3 points, got {steps.size}",
                                 points=int(steps.size))
    if np.max(errors) <= ROUNDOFF_ERROR:
        logger.info("Error series at round-off; no slope fitted", label=label,
                    max_error=float(np.max(errors)))
        return SlopeFit(slope=None, intercept=None, residual=0.0, points=int(steps.size))
    if np.any(errors <= 0) or np.any(steps <= 0):
        raise DegenerateFitError(f"{label}: nonpositive values cannot be fitted on a log scale")

    x, y = np.log(steps), np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    logger.info("Slope fitted", label=label, slope=float(slope), fit_residual=residual)
    return SlopeFit(slope=float(slope), intercept=float(intercept), residual=residual,
                    points=int(steps.size))


def local_slopes(steps: Sequence[float], errors: Sequence[float]) -> List[Optional[float]]:
    """Slope between consecutive points; None for the first point and at round-off."""
    slopes: List[Optional[float]] = [None]
    for index in range(1, len(steps)):
        previous, current = errors[index - 1], errors[index]
        if min(previous, current) <= ROUNDOFF_ERROR:
            slopes.append(None)
            continue
        slopes.append(float(np.log(previous / current) / np.log(steps[index - 1] / steps[index])))
    return slopes
