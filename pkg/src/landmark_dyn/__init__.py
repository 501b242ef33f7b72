"""Geodesic and stochastic dynamics on landmark spaces with radial cometric kernels."""

from . import _backend
from .completeness import (
    CompletenessReport,
    IntegralVerdict,
    QuadOpts,
    QuadratureError,
    classify_geodesic,
    estimate_gap_exponent,
    improper_integral,
)
from .dynamics import (
    CollisionError,
    ConservedSet,
    IntOpts,
    PhasePoint,
    Trajectory,
    conserved,
    hamiltonian,
    integrate,
    rhs,
    wedge,
)
from .geometry import (
    MetricMatrix,
    SampledCurve,
    collision_bound,
    cometric_form,
    curve_length,
    escape_bound,
    metric_matrix,
)
from .kernels import Kernel, KernelError, KernelSpec, gap, make_kernel, parse_kernel_spec, validate
from .stochastic import (
    CeReport,
    HittingEstimate,
    SdeCoeffs,
    ce_classify,
    rho,
    sde_coeffs,
    simulate_paths,
)
from .twobody import (
    NON_COLLAPSING,
    Forecast,
    TwoBodyState,
    breakdown_forecast,
    collision_time,
    from_com,
    invariants_2b,
    laplacian_exact,
    reduced_rhs,
    to_com,
)

__version__ = "0.1.0"
BACKEND = _backend.NAME

__all__ = [name for name in dir() if not name.startswith("_")]
