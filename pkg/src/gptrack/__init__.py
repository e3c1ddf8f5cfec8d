"""Tracking of a moving target from multistatic response data via
contracted generalized polarization tensors (CGPTs)."""

from .acquisition import (
    AcquisitionGeometry,
    DegenerateGeometryWarning,
    GeometryError,
    SpectrumReport,
    apply_forward,
    coefficient_matrix,
    fullview_pinv,
    fullview_singular_values,
    limitedview_spectrum,
    pinv_apply,
    scaling_matrix,
)
from .cgpt import (
    ComplexCgpt,
    DegenerateRatios,
    RigidMotion,
    first_order_estimate,
    from_complex,
    motion_matrix,
    to_complex,
    transform_cgpt,
    transform_partials,
)
from .dynamics import (
    ContainmentViolation,
    MaterialParams,
    MotionModel,
    NoiseSpec,
    TargetState,
    asymmetric_target_cgpt,
    disk_cgpt,
    generate_msr_stream,
    process_covariance,
    simulate_trajectory,
    transition_matrix,
)
from .estimators import CGPTReconstructor, EKFTracker
from .reconstruct import (
    RegularizationGrid,
    dirichlet_kernel,
    interpolation_kernel,
    left_inverse,
    noiseless_inversion,
    select_mu,
    solve_least_squares,
    solve_tikhonov,
)
from .tracker import (
    FilterError,
    GaussianBelief,
    ObservationModel,
    ekf_step,
    kf_step,
    observe,
    observe_jacobian,
    run_tracker,
)

__version__ = "0.1.0"
