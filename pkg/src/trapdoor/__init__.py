"""Trapdoor-variable diagnostics for causal effect estimation.

A trapdoor variable appears in an identifying functional of a causal
effect even though the effect itself does not depend on its value; at
finite sample sizes the choice of that value can still move the
estimate.  This package provides the graph machinery to spot such
variables, simulators for the stock examples, parametric and
nonparametric estimators of the functional, an importance-weighted
Monte Carlo estimator for models without closed forms, and a
replication harness for bias/RMSE studies.
"""

from .graph import (
    BUILTIN_GRAPHS,
    CausalGraph,
    GraphInputError,
    d_separated,
    get_graph,
    is_backdoor_admissible,
    latent_projection,
)
from .scm import (
    BUILTIN_SCMS,
    Dataset,
    DegeneracyError,
    GenerationError,
    Mechanism,
    ScmSpec,
    binary_exact_tables,
    binary_scm,
    gaussian_joint,
    gaussian_true_params,
    get_scm,
    linear_gaussian_scm,
    nongaussian_scm,
    oracle_effect,
    simulate,
    simulate_full,
)
from .fit import (
    FitError,
    FreqTable,
    GaussianObsModel,
    GlmObsModel,
    PosteriorDraws,
    RankDeficiencyError,
    UndefinedCellError,
    draw_gaussian_posterior,
    draw_glm_posterior,
    fit_freq,
    fit_gaussian,
    fit_gaussian_constrained,
    fit_glm,
    fit_linear_z,
)
from .effects import (
    CATALOG,
    FunctionalCatalogEntry,
    StrategyError,
    TrapdoorStrategy,
    effect_binary_fixed_z,
    effect_binary_weighted,
    effect_gaussian_mean,
    effect_gaussian_variance,
    gaussian_trapdoor_coefficient,
    get_catalog_entry,
    resolve_trapdoor,
)
from .montecarlo import (
    BayesEffectResult,
    WeightDegeneracyError,
    WeightedInterventionalSample,
    algorithm1,
    bayes_effect,
    mcse,
    weighted_mean,
    weighted_quantiles,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    recipe_config,
    run_experiment,
    run_recipe,
    summarize,
    true_effect,
)

__version__ = "0.1.0"
