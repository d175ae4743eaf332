"""Random walks in random environments with random holding times.

Crossing functionals and Lyapunov exponents, rate functions, first-passage
percolation and Monte Carlo diagnostics on the lattice Z^d.
"""
__version__ = "0.1.0"

from .crossing import CrossingSolution, adaptive_box, crossing_cost, halfspace_target, solve_crossing
from .fpp import (
    WeightField,
    estimate_time_constant,
    lyapunov_fpp_scaling,
    passage_time,
    passage_time_bruteforce,
)
from .lyapunov import alpha_derivative, estimate_alpha, sandwich_bounds, shape_residual
from .montecarlo import (
    empirical_ldp_curve,
    estimate_crossing_mc,
    simulate_path,
    tilted_hitting_sampler,
)
from .oracle1d import exact_a_1d, step_crossings
from .rate import (
    OracleAlpha,
    SolverAlpha,
    large_x_asymptote,
    legendre_sup,
    rate_curve,
    rate_function,
    small_x_asymptote,
)
from .scenery import (
    Deterministic,
    EnvironmentSpec,
    Exponential,
    Gamma,
    HoldingLaw,
    PowerAtZero,
    SpecError,
    StretchedAtZero,
    TransitionKernel,
    common_scale,
    load_spec,
    log_laplace,
    nestling_check,
    sample_environment,
    tauberian_scale,
)
