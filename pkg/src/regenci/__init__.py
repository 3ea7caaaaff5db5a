"""Design-based confidence sets with unknown propensity scores.

Regenerate many plausible propensity-score vectors (parametric coefficient
sampling, cross-fitting, or subsampling), build a design-based confidence
interval under each, and report the union.
"""

from .estimators import (
    Dataset,
    EstimateWithVariance,
    IntervalUnion,
    PropagationResult,
    covariate_adjusted_variance,
    did_estimate,
    ht_estimate,
    ipw_estimate,
    missing_outcome_estimate,
    propagate_ci,
    union_intervals,
    wald_interval,
)
from .glm import GlmFit, LinkFunction, fisher_information, fit_glm, predict_propensity
from .learners import LearnerSpec, clip_propensities, roc_auc, train, tune_by_mccv
from .numkit import (
    RngStream,
    cholesky_factor,
    noncentral_chisq1_quantile,
    std_normal_quantile,
)
from .regen import (
    RegenConfig,
    RegenOutput,
    regen_crossfit,
    regen_parametric,
    regen_subsample,
    regenerate,
    restricted_indices,
)
from .fisher import (
    FisherResult,
    abs_difference_in_means,
    custom_statistic,
    fisher_p_exact,
    fisher_p_value,
    fisher_propagate,
    treated_sum,
)
from .sensitivity import (
    SensitivityConfig,
    sensitivity_interval,
    sensitivity_union,
    sensitivity_value,
    shifted_estimate,
    test_tau0,
)
from .harness import (
    ExperimentReport,
    FixedPopulation,
    PopulationSpec,
    draw_assignment,
    generate_population,
    oba_interval,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
