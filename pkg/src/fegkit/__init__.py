"""Fast extragradient methods for structured nonconvex-nonconcave minimax problems."""

from .analysis import (
    bound_eag_c,
    bound_eag_v,
    bound_feg,
    bound_fega,
    bound_series,
    bound_sfeg,
    certify_bound,
    certify_potential,
    check_span,
    estimate_comonotonicity,
    estimate_lipschitz,
)
from .core import (
    DimensionError,
    FegError,
    NonFiniteError,
    OperatorHandle,
    ParameterRangeError,
    ProblemSpec,
    as_point,
    evaluate_operator,
    vector_combine,
)
from .problems import (
    QuadraticMinimax,
    check_interaction_dominance,
    make_bilinear,
    make_quadratic,
    make_scaled_identity,
    make_worst_case_smooth,
    random_negative_comonotone,
)
from .solvers import (
    StepSchedule,
    StopReason,
    Trace,
    class_feg_step,
    feg_schedule,
    resume,
    run_eag,
    run_eg,
    run_eg_plus,
    run_feg,
    run_feg_a,
)
from .stochastic import NoiseModel, noisy_eval, run_sfeg, schedule_for_epsilon

__version__ = "0.1.0"

__all__ = [
    "bound_eag_c",
    "bound_eag_v",
    "bound_feg",
    "bound_fega",
    "bound_series",
    "bound_sfeg",
    "certify_bound",
    "certify_potential",
    "check_span",
    "estimate_comonotonicity",
    "estimate_lipschitz",
    "DimensionError",
    "FegError",
    "NonFiniteError",
    "OperatorHandle",
    "ParameterRangeError",
    "ProblemSpec",
    "as_point",
    "evaluate_operator",
    "vector_combine",
    "QuadraticMinimax",
    "check_interaction_dominance",
    "make_bilinear",
    "make_quadratic",
    "make_scaled_identity",
    "make_worst_case_smooth",
    "random_negative_comonotone",
    "StepSchedule",
    "StopReason",
    "Trace",
    "class_feg_step",
    "feg_schedule",
    "resume",
    "run_eag",
    "run_eg",
    "run_eg_plus",
    "run_feg",
    "run_feg_a",
    "NoiseModel",
    "noisy_eval",
    "run_sfeg",
    "schedule_for_epsilon",
]
