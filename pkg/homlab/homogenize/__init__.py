from homlab.homogenize.pipeline import (
    CellSolutionSet,
    HomogenizationResult,
    ObstructionTensor,
    Verdict,
    classification_scale,
    classify,
    corrector_for_matrix,
    divergence_field,
    effective_matrix,
    homogenize,
    obstruction_tensor,
    solve_cell_problems,
    solve_p_auxiliary,
)

__all__ = [
    'CellSolutionSet',
    'HomogenizationResult',
    'ObstructionTensor',
    'Verdict',
    'classification_scale',
    'classify',
    'corrector_for_matrix',
    'divergence_field',
    'effective_matrix',
    'homogenize',
    'obstruction_tensor',
    'solve_cell_problems',
    'solve_p_auxiliary',
]
