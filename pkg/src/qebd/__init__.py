"""Estimation toolkit for quadratic exponential binary distributions and
related conditional-mean models on clustered binary data."""

from .core import (
    BinaryPanel,
    CompatibilityError,
    DimensionError,
    DomainError,
    ModelSpec,
    PsiVector,
    QebdError,
    QebdParams,
    RankError,
    ResourceError,
    WorkingCorrelation,
    build_g_matrix,
    discrete_kernel,
    equality_kernel,
    expit,
    logit,
    materialize_correlation,
    matrix_to_theta,
    theta_to_matrix,
    variance_fn,
)
from .design import (
    StackedDesign,
    expand_markov,
    expand_qebd,
    expand_qelr_ci,
    expand_qelr_linear,
)
from .exact import (
    ENUMERATION_CAP,
    MleFit,
    exact_moments,
    exact_sampler,
    gibbs_sampler,
    log_normalizer,
    mle_fit,
    pmf,
    pmf_all,
)
from .gee import (
    GeeFit,
    estimating_function_terms,
    estimating_function_value,
    fit_gee,
    fit_gglm,
    qic,
    sandwich_covariance,
    wald_table,
)

__version__ = "0.1.0"
