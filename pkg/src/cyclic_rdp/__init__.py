"""Last-iterate Renyi-DP accounting for cyclically-sampled, clipped DP-SGD."""

from cyclic_rdp.accountant import (
    BoundReport,
    CurvatureSpec,
    Precondition,
    PrivacyParams,
    Regime,
    all_bounds,
    best_bound,
    bound_curvature_independent,
    bound_diameter,
    bound_multi_epoch,
    bound_multi_epoch_convex,
    bound_tstar,
    pabi_baseline,
    rdp_to_dp,
)
from cyclic_rdp.divergence import (
    ResidualSchedule,
    ShiftLedger,
    lipschitz_constant,
    residual_schedule,
    shift_reduce_step,
    single_pass_cost,
    theta,
)
from cyclic_rdp.planner import (
    PlanResult,
    epoch_independent_stepsize,
    plan_for_epsilon,
    theta_upper_threshold,
)

__version__ = "0.1.0"
