"""Convergence-rate and asymptotic studies"""

from .fitting import ROUNDOFF_ERROR, SlopeFit, fit_slope, local_slopes
from .study import (
    AsymptoticStudy,
    CubicData,
    RatePoint,
    RateStudy,
    cubic_data,
    run_asymptotic_study,
    run_rate_study,
)
