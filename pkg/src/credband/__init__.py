"""Bayesian credible balls and sup-norm bands in the Gaussian sequence model,
with Monte Carlo checks of their frequentist coverage and size."""

from .credible import (
    CredibleSet,
    borell_radius_bound,
    contains_truth,
    credibility_check,
    inflate,
    l2_radius,
    slepian_lower_probe,
    sup_radius,
)
from .fourier import (
    Grid,
    basis_eval,
    default_grid_size,
    grid_bias_bound,
    sup_norm_on_grid,
    synthesize,
)
from .inference import (
    PosteriorState,
    PriorSpec,
    contraction_rate,
    eb_bracket_probe,
    empirical_bayes_alpha,
    marginal_loglik,
    posterior_mean_function,
    posterior_update,
    sample_posterior_coeffs,
)
from .sequence import (
    CoefficientSequence,
    Direct,
    ModelConfig,
    PolyIllPosed,
    RandomStream,
    holder_norm,
    kappa_eval,
    sample_data,
    sobolev_norm_sq,
    truncation_tail_bound,
)
from .truths import (
    AlternatingDecay,
    LocalBump,
    PolyDecay,
    RandomHolder,
    TruthSpec,
    classify_truth,
    generate_truth,
    parse_truth,
)

__version__ = "0.1.0"
