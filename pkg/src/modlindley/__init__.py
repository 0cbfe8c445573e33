"""Stationary analysis of Markov-modulated multiplicative Lindley recursions.

Two solvable families are implemented: a contracting-multiplier model
(``model1``) where the workload is scaled by 1, by a factor a in (0, 1), or
by a negative atom before the next net input, and a sign-flipping model
(``model2``) that alternates between a plain Lindley step and a reflected,
negated step.  Both expose exact transform vectors, moments, and (for the
sign-flipping model) the geometric decay rate of the stationary tail, with
a Monte Carlo engine for cross-validation.
"""

from .config import InstanceConfig, SolverOptions, instance_from_mapping, load_instance
from .errors import (
    ConfigError,
    ContourError,
    InstabilityError,
    ModLindleyError,
    PoleEvaluationError,
    RankDeficiencyError,
    ReducibleChainError,
    RepeatedZeroError,
    RootCountError,
    SeriesDivergenceError,
    SingularSystemError,
    TailMassError,
    UnsupportedSamplerError,
)
from .model1 import (
    Model1Solution,
    Model1Spec,
    check_stability_model1,
    mean_workload,
    solve_model1,
    solve_model1_special,
)
from .model2 import (
    DecayProfile,
    Model2Solution,
    Model2Spec,
    check_stability_model2,
    decay_profile,
    find_si_roots,
    moments_model2,
    solve_model2,
)
from .probcore import (
    GeneralLst,
    ModulationChain,
    NegativeMultiplierLaw,
    RationalLst,
    erlang_mixture_lst,
    exponential_lst,
    hyperexponential_lst,
    lst_eval,
    point_mass_lst,
    raw_moments,
    time_scaled_lst,
)
from .simulate import (
    SimConfig,
    SimEstimate,
    simulate_model1,
    simulate_model2,
    tail_decay_estimate,
)

__all__ = [
    "ConfigError",
    "ContourError",
    "DecayProfile",
    "GeneralLst",
    "InstabilityError",
    "InstanceConfig",
    "Model1Solution",
    "Model1Spec",
    "Model2Solution",
    "Model2Spec",
    "ModLindleyError",
    "ModulationChain",
    "NegativeMultiplierLaw",
    "PoleEvaluationError",
    "RankDeficiencyError",
    "RationalLst",
    "ReducibleChainError",
    "RepeatedZeroError",
    "RootCountError",
    "SeriesDivergenceError",
    "SimConfig",
    "SimEstimate",
    "SingularSystemError",
    "SolverOptions",
    "TailMassError",
    "UnsupportedSamplerError",
    "check_stability_model1",
    "check_stability_model2",
    "decay_profile",
    "erlang_mixture_lst",
    "exponential_lst",
    "find_si_roots",
    "hyperexponential_lst",
    "instance_from_mapping",
    "load_instance",
    "lst_eval",
    "mean_workload",
    "moments_model2",
    "point_mass_lst",
    "raw_moments",
    "simulate_model1",
    "simulate_model2",
    "solve_model1",
    "solve_model1_special",
    "solve_model2",
    "tail_decay_estimate",
    "time_scaled_lst",
]

__version__ = "0.1.0"
