"""Numerical laboratory for deep linear matrix sensing.

Generates linear measurement ensembles, trains deep linear networks with
mini-batch and label-noise SGD, evaluates sharpness (trace of the loss
Hessian) and its closed-form induced regularizers, estimates restricted
isometry constants, and solves the convex interpolation baselines.
"""

from .errors import (
    ConvergenceError,
    DivergenceError,
    NumericalError,
    RankDeficiencyError,
)
from .linalg import (
    SvdResult,
    gram_solve,
    nuclear_norm,
    schatten_norm,
    svd,
    svt,
)
from .measurements import (
    MeasurementSet,
    RipEstimate,
    estimate_rip,
    gen_ground_truth,
    gen_measurements,
    load_measurements,
    rip_relax_check,
    save_measurements,
)
from .metrics import (
    EvalReport,
    frobenius_lowerbound_expect,
    population_loss,
    recovery_bound,
    truncated_loss,
)
from .network import (
    DeepNet,
    TraceReport,
    end_to_end,
    grad,
    load_net,
    loss,
    reg_R,
    save_net,
    trace_hessian,
)
from .regularizers import (
    FactorizationResult,
    factorize_min_R,
    factorize_min_trace_depth2,
    induced_F_depth2,
    induced_F_prime,
    induced_F_single,
)
from .solvers import (
    RunLog,
    RunRecord,
    TrainConfig,
    init_net,
    solve_min_frobenius,
    solve_min_nuclear,
    train,
)

__version__ = "0.1.0"
