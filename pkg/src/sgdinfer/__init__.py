"""Online confidence intervals for local minima found by averaged SGD."""

from .bootstrap import (
    MultiplierDistribution,
    ReplicaEnsemble,
    ReplicaState,
    aggregate_covariance,
    collect_projections,
    ensemble_step,
    replica_covariance,
    sample_multiplier,
)
from .inference import (
    ConfidenceInterval,
    bootstrap_ci,
    cov_ci,
    empirical_quantile_inverse,
    normal_quantile,
    oracle_ci,
)
from .kernels import HAVE_COMPILED, run_coupled
from .sgd_core import (
    MiniBatch,
    ModelOracle,
    SgdState,
    StepSchedule,
    minibatch_gradient,
    run_sgd,
    sgd_step,
    step_size,
)

__version__ = "0.1.0"
