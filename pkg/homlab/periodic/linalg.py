"""Sparse direct solves with iterative refinement.

Shared by the periodic (bordered, singular) systems and the Dirichlet box
systems.  A solve is accepted once the max-norm residual drops below the
requested tolerance or below the round-off floor of the assembled system,
whichever is larger.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from homlab.utils.enhanced_logging import get_logger
from homlab.utils.error_handling import ConvergenceError, handle_linalg_errors

logger = get_logger(__name__)

ROUNDOFF_FACTOR = 64.0


@dataclass(frozen=True)
class SolveReport:
    residual: float
    floor: float
    iterations: int


def roundoff_floor(matrix: sp.spmatrix, x: np.ndarray) -> float:
    """64 eps || |M| |x| ||_inf, the smallest residual a backward-stable solve can promise."""
    return float(ROUNDOFF_FACTOR * np.finfo(float).eps * np.max(abs(matrix) @ np.abs(x)))


class FactorizedSystem:
    """LU factorization of a square sparse matrix, reused across right sides."""

    @handle_linalg_errors
    def __init__(self, matrix: sp.spmatrix, label: str = 'system'):
        self.matrix = sp.csc_matrix(matrix)
        self.label = label
        self._lu = spla.splu(self.matrix)
        logger.debug("Factorized sparse system", label=label, size=self.matrix.shape[0],
                     nonzeros=int(self.matrix.nnz))

    @handle_linalg_errors
    def solve(self, rhs: np.ndarray, tol: float, max_iterations: int,
              scale: float = 1.0, rows: Optional[slice] = None) -> Tuple[np.ndarray, SolveReport]:
        """Solve with iterative refinement.

        ``scale`` divides residuals before comparing them with ``tol`` (the
        coefficient magnitude, so tolerances stay meaningful for large A).
        ``rows`` restricts the reported residual to the equations that carry
        the physics (the bordering row is exact by construction).
        """
        rhs = np.asarray(rhs, dtype=float)
        x = self._lu.solve(rhs)
        rows = rows if rows is not None else slice(None)

        for iteration in range(1, max_iterations + 1):
            defect = rhs - self.matrix @ x
            residual = float(np.max(np.abs(defect[rows]))) / scale
            floor = roundoff_floor(self.matrix, x) / scale
            if residual <= max(tol, floor):
                return x, SolveReport(residual=residual, floor=floor, iterations=iteration)
            x = x + self._lu.solve(defect)

        defect = rhs - self.matrix @ x
        residual = float(np.max(np.abs(defect[rows]))) / scale
        floor = roundoff_floor(self.matrix, x) / scale
        if residual <= max(tol, floor):
            return x, SolveReport(residual=residual, floor=floor, iterations=max_iterations)

        raise ConvergenceError(
            f"{self.label}: residual {residual:.3e} above tolerance {tol:.1e} "
            f"after {max_iterations} refinement steps",
            residual=residual,
            tolerance=tol,
            iterations=max_iterations,
        )
