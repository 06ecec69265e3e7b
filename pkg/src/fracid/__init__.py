"""Spectral solutions and simulation of the fractional immigration-death process."""

__version__ = "0.1.0"

from .charlier import (
    CharlierOverflowError,
    DivergentInputError,
    ModelParams,
    SpectralCoefficients,
    SpectralMeasure,
    TruncationPolicy,
    charlier_c,
    charlier_q,
    decompose,
    orthonormal_table,
    poisson_mass,
    reconstruct,
)
from .mlf import MlfEval, mittag_leffler, mlf, mlf_relaxation, mlf_uniform_bound
from .operators import (
    LatticeFunction,
    TruncatedOperatorMatrix,
    apply_forward,
    apply_generator,
    caputo_derivative_numeric,
    delta,
    nabla_minus,
    nabla_plus,
    truncated_matrix,
)
from .spectral import (
    PmfVector,
    SolutionSurface,
    ToleranceUnreachableError,
    autocovariance,
    caputo_residual,
    fundamental_solution,
    limit_distribution,
    solve_backward,
    solve_forward,
    transition_pmf,
)
from .stochastic import (
    McEstimate,
    inverse_density,
    inverse_subordinator,
    mc_autocovariance,
    mc_transition_pmf,
    sample_stable,
    simulate_ctmc,
    simulate_fid,
    stable_density,
)
