"""Two-type branching-process model of mutation-driven treatment failure.

Exact stochastic simulation of recurrence and crossover times, numerical
evaluation of the associated large-deviation rate functions, and Monte
Carlo experiments confronting the two.
"""

from .params import (
    Critical,
    InvalidConfiguration,
    ModelParams,
    MutationLaw,
    PreExisting,
    ResistantRates,
    ScenarioConfig,
    SensitiveRates,
    SubThreshold,
    time_scale,
    validate,
)
from .analytic import (
    PopulationIndex,
    TargetTimes,
    clone_count_mean,
    clone_mgf,
    clone_mgf_domain,
    clone_pmf,
    conditional_clone_mean,
    conditional_clone_mgf,
    decay_coefficient,
    mean_population,
    solve_targets,
    subcritical_laplace,
    variance_population,
)
from .ratefn import (
    ClonesOptimum,
    Cumulant,
    RateResult,
    case3_theta_closed_form,
    clone_number_cost,
    conditioned_rate,
    crossover_rate,
    cumulant,
    cumulant_double_prime,
    cumulant_prime,
    decay_ratio_curve,
    legendre,
    optimal_clone_factor,
    recurrence_rate,
    survivor_integral,
    survivor_integral2,
)

__version__ = "0.1.0"
