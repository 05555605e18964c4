"""Adaptive zero-variance importance sampling for Markov chain expectations.

Exact linear-algebra oracles sit next to every stochastic routine so that
simulation output can be checked against ground truth.
"""

__version__ = "0.1.0"

from .adaptive import (
    AdaptiveTrace, BasisModel, contraction_diagnostic, estimate_rate, fit_values, run_adaptive,
    two_step_hit_frequency,
)
from .counterexample import (
    HalvingChainSpec, classify_experiment, divergent_spec, simulate_halving, summable_spec,
)
from .eigen import (
    EigenModel, build_eigen_tilted, eigen_oracle, run_eigen_adaptive, simulate_regeneration,
    solve_alpha,
)
from .errors import (
    AssumptionError, CensoredError, DivergenceError, EstimationError, ModelError, NumericalError,
    ZeroValueWarning,
)
from .exact import (
    brute_force_moments, exact_moments, exact_survival, solve_mu, spectral_radius,
    truncated_series_mu,
)
from .model import (
    MarkovRewardModel, StructuralConstants, compute_constants, dp_gamma, load_model,
    random_model, two_state_model, validate_model,
)
from .sampling import estimate_mu, simulate_one, tail_survival
from .tilting import TiltedModel, build_tilted
