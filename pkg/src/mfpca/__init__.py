"""Multivariate functional PCA for vector-valued curves on different
one-dimensional domains, with a Karhunen-Loeve simulation engine and a
replication harness for univariate truncation studies."""

__version__ = "0.1.0"

from .numerics import (
    QuadratureWeights,
    SampledGrid,
    SymmetricEigenResult,
    canonical_sign,
    gram_matrix,
    sym_eig,
    trapezoid_weights,
)
from .fdata import (
    MeanFunction,
    MultivariateFunctionalSample,
    UnivariateFunctionalSample,
    center,
    inner_product_multi,
    inner_product_uni,
)
from .basis import (
    MultivariateBasisSystem,
    SplitSystemSpec,
    bspline_design,
    fourier_basis,
    smooth_to_basis,
    split_system,
)
from .univariate import (
    CovarianceSurface,
    UnivariateEigenSystem,
    UnivariateFPCA,
    eigendecompose_covariance,
    estimate_covariance,
    select_M_by_pve,
    uni_scores,
)
from .multivariate import (
    MultivariateEigenSystem,
    MultivariateFPCA,
    ScoreMatrix,
    TruncationSpec,
    VarianceReport,
    assemble_scores,
    mfpca_combine,
    multivariate_scores,
    score_covariance,
    truncate_reliable,
    variance_report,
)
from .simulation import (
    ReplicationResult,
    SimulatedDataset,
    SimulationConfig,
    StudyReport,
    draw_cuts,
    eigenvalue_errors,
    exponential_eigenvalues,
    run_error_study,
    run_npc_study,
    simulate_dataset,
)
from .weather import (
    ScenarioResult,
    WeatherDataset,
    align_scenario_signs,
    export_eigenfunctions,
    export_table,
    load_weather,
    run_scenario,
)

__all__ = [
    "__version__",
    "SampledGrid",
    "QuadratureWeights",
    "SymmetricEigenResult",
    "trapezoid_weights",
    "sym_eig",
    "gram_matrix",
    "canonical_sign",
    "UnivariateFunctionalSample",
    "MultivariateFunctionalSample",
    "MeanFunction",
    "inner_product_uni",
    "inner_product_multi",
    "center",
    "fourier_basis",
    "SplitSystemSpec",
    "MultivariateBasisSystem",
    "split_system",
    "bspline_design",
    "smooth_to_basis",
    "CovarianceSurface",
    "UnivariateEigenSystem",
    "estimate_covariance",
    "eigendecompose_covariance",
    "uni_scores",
    "select_M_by_pve",
    "UnivariateFPCA",
    "TruncationSpec",
    "ScoreMatrix",
    "MultivariateEigenSystem",
    "VarianceReport",
    "assemble_scores",
    "score_covariance",
    "mfpca_combine",
    "multivariate_scores",
    "variance_report",
    "truncate_reliable",
    "MultivariateFPCA",
    "exponential_eigenvalues",
    "SimulationConfig",
    "SimulatedDataset",
    "ReplicationResult",
    "StudyReport",
    "draw_cuts",
    "simulate_dataset",
    "eigenvalue_errors",
    "run_error_study",
    "run_npc_study",
    "WeatherDataset",
    "ScenarioResult",
    "load_weather",
    "run_scenario",
    "align_scenario_signs",
    "export_table",
    "export_eigenfunctions",
]
