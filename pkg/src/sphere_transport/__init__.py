"""Optimal transport, relative entropy and curvature checks on unit spheres.

The package verifies, at desk scale, an exact identity for the relative
entropy of a measure transported by a gradient map on S^n, and the
transportation-cost inequality that follows from it. Modules:

``sphere``     closed-form geometry of the embedded sphere
``grids``      structured quadrature grids on S^2 and S^3
``polynomials``ambient polynomial fields with exact derivatives
``sht``        spherical harmonic transforms on Gauss-Legendre grids
``fields``     scalar fields, c-transform, transport maps
``transport``  discrete measures, Wasserstein distances, the W1 bound
``entropy``    the entropy identity, K profile and Talagrand checks
``jacobi``     geodesic deviation and the small-step expansion
``cli``        the batch experiment harness
"""

from .config import DEFAULT, GeometryConfig
from .errors import (
    BaseMismatch,
    ConjugatePoint,
    CoincidentPoints,
    CutLocusViolation,
    DegenerateDistance,
    DimensionUnsupported,
    DomainError,
    KappaNonpositive,
    NonSmoothField,
    NotADensity,
    NotCConcave,
    NotPositiveDefinite,
    NotSymmetric,
    SizeLimit,
    SolverNotConverged,
    SphereTransportError,
)
from .grids import Grid, GridSpec, build_grid
from .sphere import (
    SpherePoint,
    SymOperator,
    TangentFrame,
    TangentVector,
    exp_map,
    geodesic_distance,
    green_function,
    green_gradient,
    hessian_half_dist_sq,
    jacobian_exp,
    log_map,
)
from .fields import (
    ScalarField,
    c_transform,
    check_c_concavity,
    gradient_field,
    hessian_field,
    invert_transport,
    load_field,
    quadrature,
    random_field,
    save_field,
    transport_map,
    transport_velocity,
)
from .transport import (
    DiscreteMeasure,
    TransportPlan,
    green_w1_bound,
    load_measure,
    pushforward,
    save_measure,
    transport_cost_of_potential,
    wasserstein_p,
)
from .entropy import (
    EntropyReport,
    carleman_log_det2,
    density_from_map,
    entropy_formula_rhs,
    k_function,
    k_series,
    kappa_of_potential,
    relative_entropy,
    talagrand_check,
    u_hessian_line_integral,
)
from .jacobi import (
    BlockState,
    CurvatureSpec,
    hessian_from_jacobi,
    jacobi_solve,
    lichnerowicz_integral,
    matrix_trig,
    rk4_jacobi,
    small_tau_expansion_terms,
)

__version__ = "0.1.0"
