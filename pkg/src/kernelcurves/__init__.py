"""Learning-curve theory for kernel regression, with empirical verification tools."""

from .kernels import (
    EigenSystem,
    KernelDescriptor,
    dot_product_eigenvalues,
    dot_product_spectrum,
    effective_regularization_table,
    gram_eigendecompose,
    gram_matrix,
    kernel_eval,
    multiclass_eg,
    nngp_dot_profile,
    ntk_dot_profile,
    project_one_hot,
    project_target,
    sphere_profile,
)
from .experiments import (
    DataSource,
    ExperimentPlan,
    TargetSource,
    TrialReport,
    empirical_bias_variance,
    gegenbauer_target,
    krr_fit_predict,
    run_trials,
    sample_sphere,
    theory_experiment_report,
)
from .spectra import (
    Spectrum,
    TargetDecomposition,
    cumulative_power,
    degeneracy,
    power_law_spectrum,
    sample_target,
    total_power,
)
from .theory import (
    StageParameters,
    TheorySolution,
    band_limited_eg,
    classify_band_limited,
    classify_curve,
    generalization_error,
    hurwitz_zeta,
    learning_curve,
    optimal_ridge,
    phase_boundary,
    power_law_stage_ridge,
    solve_kappa,
    stage_parameters,
    staged_curve,
    staged_eg,
)

__all__ = [
    "DataSource",
    "EigenSystem",
    "ExperimentPlan",
    "KernelDescriptor",
    "Spectrum",
    "StageParameters",
    "TargetDecomposition",
    "TargetSource",
    "TheorySolution",
    "TrialReport",
    "band_limited_eg",
    "classify_band_limited",
    "classify_curve",
    "cumulative_power",
    "degeneracy",
    "dot_product_eigenvalues",
    "dot_product_spectrum",
    "effective_regularization_table",
    "empirical_bias_variance",
    "gegenbauer_target",
    "generalization_error",
    "gram_eigendecompose",
    "gram_matrix",
    "hurwitz_zeta",
    "kernel_eval",
    "krr_fit_predict",
    "learning_curve",
    "multiclass_eg",
    "nngp_dot_profile",
    "ntk_dot_profile",
    "optimal_ridge",
    "phase_boundary",
    "power_law_spectrum",
    "power_law_stage_ridge",
    "project_one_hot",
    "project_target",
    "run_trials",
    "sample_sphere",
    "sample_target",
    "solve_kappa",
    "sphere_profile",
    "stage_parameters",
    "staged_curve",
    "staged_eg",
    "theory_experiment_report",
    "total_power",
]

__version__ = "0.1.0"
