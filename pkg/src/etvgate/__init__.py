"""Expected total variation (ETV) and floodgate lower confidence bounds."""
from .data import Dataset, read_csv, write_csv
from .errors import (
    DegenerateResponseError,
    EtvError,
    HierarchyError,
    NonConvergenceError,
    OutOfSupportError,
    ParameterError,
    SampleSizeError,
    SupportMismatchError,
    TrainingError,
)
from .floodgate import (
    LcbResult,
    draw_resamples,
    floodgate_cv_lcb,
    floodgate_hetv_lcb,
    floodgate_lcb,
    row_losses,
    sample_loss,
    z_quantile,
)
from .oracle import (
    DiscreteDistribution,
    FiniteJoint,
    etv_exact,
    hetv_exact,
    oracle_classifier,
    read_joint,
    total_variation,
    write_joint,
)
from .classifiers import (
    ConstantClassifier,
    FeatureMap,
    GreedyTrainer,
    LogisticModel,
    ThresholdTrainer,
    WorkingModelPair,
    fit_logistic,
    fit_working_models,
    greedy_discriminator,
    macm_classifier,
    select_threshold_cv,
    threshold_classifier,
)
from .samplers import (
    Ar1Gaussian,
    ConjointDesign,
    conjoint_ideal_joint,
    finite_joint_sampler,
    gaussian_conditional_sampler,
    gen_conjoint_ideal,
    gen_interaction_data,
    gen_probit_data,
)
from .sensitivity import SensitivityBound, confounding_lower_bound

__version__ = "0.1.0"
