"""Self-similar measures, mixed entropies, Gaussian fields on fractal
supports, and Monte Carlo verification of small-deviation rates."""

__version__ = "0.1.0"

from .backend import BACKEND
from .ifs import (
    PointMeasure,
    SelfSimilarSystem,
    Similarity,
    Word,
    builtin_system_names,
    builtin_system_path,
    compose,
    enumerate_level_words,
    gamma_exponent,
    level_cover_at_least,
    level_cover_for_budget,
    load_system,
    make_word,
    sample_measure,
    save_system,
    similarity_dimension,
    stratified_sample,
)
from .entropy import (
    CurveFit,
    EntropyBound,
    EntropyCurve,
    MixedParams,
    covering_number,
    delta_curve,
    delta_packing,
    fit_powerlaw,
    inner_entropy,
    j_functional,
    packing_number,
    sigma_curve,
    sigma_infty,
    sigma_line_curve,
    sigma_line_exact,
    sigma_selfsimilar,
)
from .fields import (
    Kernel,
    brownian_sheet,
    conditional_variance,
    fbm,
    gram,
    nondeterminism_profile,
    parse_kernel,
    sample,
)
from .smalldev import (
    Budget,
    Prediction,
    RateFit,
    Report,
    SmallDevCurve,
    estimate_curve,
    fit_rate,
    lebesgue_sites,
    lq_norm,
    predicted_exponent,
    verify,
)

__all__ = [n for n in dir() if not n.startswith("_")]
