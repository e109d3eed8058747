"""Exponential local convergence of Bernstein-type operators, checked numerically."""

__version__ = "0.1.0"

from .numerics import LogValue, compensated_sum, log_binomial, log_binomial_pmf, log_sum_exp_signed
from .tails import (
    Side,
    TailBoundReport,
    TailQuery,
    bound_report,
    chernoff_tail,
    exact_tail,
    ferrante_tail,
    kl_divergence,
    kl_quadratic_approx,
)
from .functions import (
    FunctionSpec,
    Interval,
    evaluate,
    log_evaluate,
    parse_function_spec,
    sup_norm_deviation,
)
from .operators import (
    OperatorParams,
    PerturbationSpec,
    bernstein_deviation,
    bernstein_eval,
    central_moment,
    irwin_hall_cdf,
    kantorovich_deviation,
    kantorovich_eval,
)
from .experiments import (
    BoundCheck,
    DecayFit,
    boundary_run,
    decay_fit,
    dloc_run,
    herzog_hill_run,
    kantorovich_check,
    locally_constant_check,
    sharpness_run,
)
