"""Local expectation gradients for black-box variational inference."""

from .config import ExperimentConfig, format_config, parse_config
from .errors import (
    ConfigError,
    DegenerateConditionalError,
    DivergenceError,
    InvalidAssignmentError,
    InvalidModelError,
    LegradError,
    NonFiniteValueError,
    StateSpaceTooLargeError,
    UnsupportedFamilyError,
    UnsupportedStructureError,
)
from .estimators import EstimatorConfig, GradientEstimate, ldgrad, legrad, regrad, true_gradient_oracle
from .experiments import run_experiment
from .optimizer import OptimizerConfig, run
from .quadrature import QuadratureRule, expect_gaussian, gauss_hermite
from .targets import (
    CorrelatedGaussianTarget,
    FunctionTarget,
    GaussianTarget,
    LogisticRegressionTarget,
    SigmoidBeliefNetTarget,
    TableTarget,
    Target,
)
from .variational import (
    Bernoulli,
    Categorical,
    Gaussian,
    RecognitionBernoulli,
    VariationalModel,
    factorized_gaussian,
    recognition_model,
)

__version__ = "0.1.0"
