"""Latent Gaussian-process classification of input space into two labelled regions."""

from .core_gp import (
    CovMatrix,
    GpParams,
    MeanBasis,
    NumericalError,
    build_cov,
    conditional_normal,
    mean_vector,
    sq_exp_corr,
)
from .design import DatasetError, LabelledDesign, ScaleInfo, read_dataset, write_dataset
from .inference import (
    AbcResult,
    Chain,
    MhConfig,
    PriorSpec,
    abc_fit,
    chain_diagnostics,
    default_priors,
    effective_sample_size,
    log_prior,
    map_estimate,
    mh_run,
)
from .orthant import LikelihoodEstimate, orthant_log_likelihood, orthant_probability, phi_halfline
from .prediction import (
    BoundaryError,
    BoundaryEstimate,
    MisclassificationReport,
    PredictiveSummary,
    Predictions,
    boundary_1d,
    boundary_contour_2d,
    class_probability,
    loo_misclassification,
    marching_squares,
    transform_inputs,
)
from .sampler import (
    DegenerateSampleError,
    LatentSample,
    OrderingPlan,
    latent_ensemble,
    reorder_for_boundary,
    sequential_sign_sample,
)
from .testbed import (
    SantnerParams,
    SyntheticProblem,
    halfplane_2d,
    kndy_stand_in,
    latin_hypercube,
    santner_ring,
    step_1d,
)

__version__ = "0.1.0"
