"""Synthetic-likelihood inference under model misspecification: exact and
estimated synthetic likelihoods, posterior samplers (pseudo-marginal BSL,
variance-inflated robust BSL), two-step sandwich adjustment, asymptotic
shape checks, and misspecification diagnostics.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegeneratePosteriorError,
    DegenerateSummaryError,
    DomainError,
    FactorizationError,
    InsufficientResolutionError,
    NotAMaximumError,
    ParameterDomainError,
    SingularCovarianceError,
    SynlikError,
)
from .models import (
    GkParams,
    Ma1Params,
    ModelSpec,
    SvParams,
    TimeSeries,
    gk_model,
    gk_quantile,
    ma1_model,
    simulate_gk,
    simulate_ma1,
    simulate_sv,
)
from .posterior import Chain, GridPosterior, bsl_rwmh, grid_posterior, rbsl_mh, rejection_abc
from .synthlik import (
    ExactMa1SL,
    LimitTarget,
    SynthLikEstimate,
    estimate_sl,
    kl_gaussian_sl,
    ma1_exact_cov,
    ma1_exact_loglik,
    ma1_exact_mean,
    ma1_limit_cov,
    misspec_index,
    sl_logpdf,
    temper_logpdf,
)
