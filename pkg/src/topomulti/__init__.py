"""Multi-material compliance topology optimization with p-norm mapping,
extended SIMP and DMO stiffness interpolation."""
from .fem import BoundaryConditions, FEModel, SolverError, StructuredGrid, unit_element_stiffness
from .filtering import FilterConfig, HelmholtzFilter, ProjectionConfig, continuation_step, projection
from .interpolation import MaterialSet, SchemeKind, modulus, modulus_gradient, weights
from .mma import MmaParams, MmaState, mma_init, mma_step
from .problem import (
    DesignField,
    Evaluator,
    OptimizationConfig,
    OptimizationError,
    OptimizationHistory,
    ProblemSpec,
    build_problem,
    grayness,
    run_optimization,
)

__version__ = "0.1.0"
