"""Shape optimization solver for the exterior Bernoulli free boundary problem.

The free boundary is tracked by minimizing the Dirichlet-data misfit
J(Omega) = 1/2 int_Gamma (dw/dn)^2 ds over star-shaped trial boundaries with
Fourier-parametrized radius, using an adjoint-based boundary expression of the
shape derivative and a step-adaptive gradient descent.
"""

from .fields import Constant, LogDistance, Polynomial, parse_field_spec
from .geometry import (
    FixedBoundarySpec,
    FourierBoundary,
    UnitVector2,
    boundary_quadrature,
    eval_normal,
    eval_radius,
    polar_angle,
    sample_polyline,
)
from .meshing import (
    GAMMA,
    SIGMA,
    Mesh,
    MeshingError,
    MeshParams,
    boundary_nodes,
    mesh_quality,
    morph,
    read_mesh,
    triangulate,
    validate_mesh,
    write_mesh,
)
from .fem import (
    FemError,
    ScalarField,
    SparseSystem,
    VectorField,
    assemble_stiffness,
    gamma_integral,
    normal_flux_on_gamma,
    solve_dirichlet,
    solve_mixed,
    triangle_gradient,
)
from .shape_calculus import (
    ProblemData,
    ShapeEvaluation,
    basis_modes,
    euler_derivative,
    evaluate,
    extend_velocity,
    gradient,
    solve_adjoint,
)
from .optimizer import DescentParams, OptTrajectory, descend
from .validation import (
    MORPH,
    REMESH,
    FdParams,
    central_difference,
    exact_circle_error,
    fd_gradient,
    hessian_probe,
)

__version__ = "1.0.0"

__all__ = [
    "Constant",
    "LogDistance",
    "Polynomial",
    "parse_field_spec",
    "FixedBoundarySpec",
    "FourierBoundary",
    "UnitVector2",
    "boundary_quadrature",
    "eval_normal",
    "eval_radius",
    "polar_angle",
    "sample_polyline",
    "GAMMA",
    "SIGMA",
    "Mesh",
    "MeshingError",
    "MeshParams",
    "boundary_nodes",
    "mesh_quality",
    "morph",
    "read_mesh",
    "triangulate",
    "validate_mesh",
    "write_mesh",
    "FemError",
    "ScalarField",
    "SparseSystem",
    "VectorField",
    "assemble_stiffness",
    "gamma_integral",
    "normal_flux_on_gamma",
    "solve_dirichlet",
    "solve_mixed",
    "triangle_gradient",
    "ProblemData",
    "ShapeEvaluation",
    "basis_modes",
    "euler_derivative",
    "evaluate",
    "extend_velocity",
    "gradient",
    "solve_adjoint",
    "DescentParams",
    "OptTrajectory",
    "descend",
    "MORPH",
    "REMESH",
    "FdParams",
    "central_difference",
    "exact_circle_error",
    "fd_gradient",
    "hessian_probe",
    "__version__",
]
