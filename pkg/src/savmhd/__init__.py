"""Energy-stable decoupled finite-element solver for 2D inductionless MHD."""

from .mesh import Mesh, build_unit_square_mesh, triangle_areas, validate_mesh
from .fem import Assembler, DofLayout, build_dof_layout
from .linsolve import (LinearSolveError, SaddleSystem, SingularSystemError,
                       prepare_matrix)
from .problems import (ProblemDefinition, accuracy_problem_2d,
                       cavity_problem_2d, stability_problem_2d)
from .stepper import (DenominatorError, RunResult, SavRunError, SavState,
                      SavStepper, SchemeConfig, StepReport, run)
from .diagnostics import (EnergyTrace, ErrorRecord, compute_errors,
                          convergence_table, emit_csv, energy_trace)

__all__ = [
    "Mesh", "build_unit_square_mesh", "triangle_areas", "validate_mesh",
    "Assembler", "DofLayout", "build_dof_layout",
    "LinearSolveError", "SaddleSystem", "SingularSystemError",
    "prepare_matrix",
    "ProblemDefinition", "accuracy_problem_2d", "cavity_problem_2d",
    "stability_problem_2d",
    "DenominatorError", "RunResult", "SavRunError", "SavState", "SavStepper",
    "SchemeConfig", "StepReport", "run",
    "EnergyTrace", "ErrorRecord", "compute_errors", "convergence_table",
    "emit_csv", "energy_trace",
]

__version__ = "0.1.0"
