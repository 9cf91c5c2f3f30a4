"""Numerical verification laboratory for an ODE-type blowup model of
nonlinear Jeans instability: reference-solution integration, closed-form
constants and bounds, torus perturbation evolution, and the
compactified-time (Fuchsian) cross-checks."""

from .params import (
    DerivedConstants,
    ModelParams,
    OdeData,
    curve_F,
    curve_L,
    derive_constants,
    eigenvalues_tilde,
    find_t_star,
    k_admissible_interval,
    validate_params,
)
from .reference import (
    BlowupEstimate,
    BoundReport,
    StopCriteria,
    Trajectory,
    check_bounds,
    estimate_blowup_time,
    eval_aux,
    integrate_reference,
    t_of_tau,
    tau_of_t,
)
from .torus import NormConfig, TorusGrid, diff, sobolev_norm, w1inf_norm, winf_norm
from .pde import (
    FieldSet,
    ModeSpec,
    PerturbationConfig,
    integrate_pde,
    metric_coef,
    ratio_norms,
    residual_main_eq,
    rhs_perturbation,
    source_F,
)
from .fuchsian import (
    FuchsianConfig,
    FuchsianState,
    assemble,
    condition_v_check,
    energy_monitor,
    from_fuchsian,
    fuchsian_residual,
    integrate_fuchsian,
    remainders,
    to_fuchsian,
)
from .config import RunConfig, default_config, load_config

__version__ = "0.1.0"
