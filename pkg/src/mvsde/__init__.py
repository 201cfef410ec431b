"""Simulation and deviation-analysis toolkit for path-dependent multivalued
mean-field SDEs.

Builds particle approximations of reflected / maximal-monotone stochastic
delay equations whose coefficients depend on the law of the solution, plus
the deterministic limit, controlled skeletons, normalized deviation systems,
rate-function evaluation and Monte Carlo scaling experiments.
"""

from mvsde.paths import TimeGrid, Trajectory, Segment, segment_at, sup_norm, sup_distance
from mvsde.operators import (
    MonotoneOperator,
    zero_operator,
    normal_cone_box,
    normal_cone_halfspace,
    normal_cone_ball,
    subdifferential_1d,
    product_operator,
    resolvent_step,
    check_monotone,
)
from mvsde.measures import EmpiricalMeasure, second_moment, w2_assignment, w2_coupling_bound
from mvsde.coefficients import (
    CoefficientSet,
    Example5Family,
    eval_b,
    eval_sigma,
    frechet_pairing,
    lions_pairing,
    check_growth,
    check_lipschitz,
)
from mvsde.solver import (
    SimConfig,
    SolutionBundle,
    Control,
    simulate_perturbed,
    simulate_controlled,
    solve_deterministic_limit,
    solve_skeleton,
    simulate_mdp_deviation,
    solve_mdp_skeleton,
    simulate_clt_pair,
)
from mvsde.rates import RateProblem, rate_by_inversion, rate_by_penalty, rate_certificate

__version__ = "0.1.0"
