"""Exponential approximation machinery: equilibrium couplings, closed-form
error bounds, and Monte Carlo verification for branching processes, Markov
occupation times and planar random walks."""

__version__ = "0.1.0"

from .dist_core import (
    DiscretePMF,
    EquilibriumRep,
    MomentSummary,
    PiecewiseLinear,
    binary_pmf,
    check_equilibrium_identity,
    equilibrium_cdf,
    equilibrium_rep,
    geometric_pmf,
    moments,
    parse_law,
    pmf_from_mapping,
    poisson_pmf,
    sample,
    sample_equilibrium,
    size_bias,
)
from .metrics import (
    DistanceReport,
    EmpiricalSample,
    dk_from_dw_bound,
    dk_vs_exp,
    distance_report,
    dw_vs_exp,
)
from .bounds import (
    BoundReport,
    GWBoundInput,
    c_const,
    dk_bound_from_gap,
    dk_bound_from_tail,
    dw_bound_from_gap,
    eta,
    eta_critical_limit,
    eta_upper_sub,
    eta_upper_super,
    gw_wasserstein_bound,
    log_sum_inequality_margin,
    occupation_bound,
    survival_upper,
)
from .galton_watson import (
    CouplingDraw,
    SpineDraw,
    conditional_zn_sample,
    coupling_gap_estimate,
    generation_pmf,
    rstar_sample,
    simulate_generations,
    spine_sample,
    survival_probability,
    yaglom_lambda,
)
from .markov_walk import (
    ChainSpec,
    JointLaw,
    Walk2DSpec,
    dependent_sum_equilibrium_exact,
    dependent_sum_identity_residual,
    erdos_taylor_experiment,
    exact_return_probs,
    expected_occupations,
    lazy_walk,
    occupation_couple,
    parse_walk,
    return_prob_curve,
    simple_walk,
    walk2d_returns,
)
from .experiments import ExperimentConfig, RunReport, run
