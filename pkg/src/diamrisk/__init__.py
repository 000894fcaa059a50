"""Diametrical risk minimization: training against the worst empirical risk
in a parameter-space neighborhood, plus the analysis tools to study it."""

__version__ = "0.1.0"

from .analysis import (
    FlatnessReport,
    Histogram,
    RateStudyResult,
    confidence_region_check,
    erm_drm_gap_table,
    excess,
    flatness_report,
    landscape_histogram,
    rate_study,
)
from .data import Dataset, accuracy, flip_labels, gen_gaussian_blobs
from .harness import (
    ConfigError,
    ExperimentConfig,
    default_experiment_config,
    load_experiment_config,
    run_label_noise_experiment,
)
from .losses import (
    LossModel,
    QuadraticLoss,
    ReciprocalLoss,
    Sample,
    TentLoss,
    quadratic_eval,
    reciprocal_eval,
    rho_m,
    tent_eval,
    tent_true_risk,
)
from .mlp import MlpLossModel, MlpSpec, forward, init_params, loss_and_grad, nll_softmax
from .optimizer import (
    DrmConfig,
    EveryK,
    PerturbQueue,
    RunTrace,
    make_batches,
    select_worst,
    sgd_drm_run,
    sgd_erm_run,
    simple_sgd_drm_run,
    simple_sgd_drm_step,
)
from .params import (
    Box,
    EuclideanBall,
    FeasibleSet,
    NormKind,
    ParamVector,
    Unbounded,
    axpy,
    norm,
    project,
    sample_sphere,
)
from .risk import (
    RiskEstimate,
    diametrical_risk_grid_1d,
    diametrical_risk_sampled,
    empirical_risk,
    true_risk,
)
