"""Finite-time H2 model reduction for complex diagonal state-space models."""

from .baselines import BtResult, FrequencyGrid, balanced_truncation, hankel_singular_values, hinf_estimate, select_initializer
from .estimators import BalancedTruncation, FiniteTimeH2Reducer
from .exceptions import DssError
from .gradients import GradientSet, exp_chain_rule, fd_gradient_oracle, theorem1_gradients
from .gramians import GramianSet, cauchy_kernel, error_h2_norm_sq, h2_norm_sq, objective_f, solve_finite_sylvester
from .model import (
    DssExpParams,
    DssModel,
    Horizon,
    discretize,
    exp_params_to_model,
    load_bank,
    model_to_exp_params,
    random_stable_model,
    save_bank,
)
from .reducer import ReducerConfig, ReductionTrace, armijo_step, reduce
from .simulate import SequenceSignal, check_error_bound, run_recurrence, simulate

__version__ = "0.1.0"
