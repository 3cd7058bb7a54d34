"""Stochastic SEIR epidemics with household, group and community mixing.

Simulation, complete-data likelihood inference, final-size
pseudolikelihood inference, Metropolis-Hastings samplers and the
threshold parameter R*.
"""

from .finalsize import (HouseholdFinalSizeTable, household_final_size, household_severity_mean,
                        mean_final_size)
from .likelihood import (CompleteDataLikelihood, ConvergenceError, MLEResult, TrajectoryState,
                         estimate_period_means, log_likelihood, mle, score)
from .mcmc import (Chain, ChainConfig, PosteriorSummary, diagnostics, effective_sample_size,
                   run_complete_chain, run_finalsize_chain, summarize)
from .population import (InitialCondition, PopulationError, PopulationStructure,
                         build_schools_workplaces, build_villages, load_population, save_population)
from .pseudolik import (HouseholdTriple, TransformedParams, VillageFinalSize, household_prob_ex2,
                        pseudo_loglik_ex1, pseudo_loglik_ex2, pseudo_mle_ex1, pseudo_mle_ex2)
from .simulate import (EXTERNAL, EpidemicParams, EventLog, FinalSizeData, PeriodDistribution,
                       final_size, simulate, simulate_many)
from .threshold import (offspring_matrix_example2, rstar_eigen, rstar_example1,
                        rstar_from_transformed)

__version__ = "0.1.0"

__all__ = [
    "HouseholdFinalSizeTable", "household_final_size", "household_severity_mean", "mean_final_size",
    "CompleteDataLikelihood", "ConvergenceError", "MLEResult", "TrajectoryState",
    "estimate_period_means", "log_likelihood", "mle", "score",
    "Chain", "ChainConfig", "PosteriorSummary", "diagnostics", "effective_sample_size",
    "run_complete_chain", "run_finalsize_chain", "summarize",
    "InitialCondition", "PopulationError", "PopulationStructure", "build_schools_workplaces",
    "build_villages", "load_population", "save_population",
    "HouseholdTriple", "TransformedParams", "VillageFinalSize", "household_prob_ex2",
    "pseudo_loglik_ex1", "pseudo_loglik_ex2", "pseudo_mle_ex1", "pseudo_mle_ex2",
    "EXTERNAL", "EpidemicParams", "EventLog", "FinalSizeData", "PeriodDistribution",
    "final_size", "simulate", "simulate_many",
    "offspring_matrix_example2", "rstar_eigen", "rstar_example1", "rstar_from_transformed",
]
