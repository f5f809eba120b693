"""sparsechan core exports.

This module exposes the primary public classes and functions for consumers of the
sparsechan package.
"""

from .sim_types import (
    ExperimentConfig,
    Estimate,
    Estimator,
    SparseChanError,
    DimensionError,
    DomainError,
    SingularityError,
    ConvergenceError,
    DivergenceError,
    InfeasibleError,
    DegenerateInputError,
    ContractViolationError,
    BadConfigError,
    EstimatorRegistrationError,
)
from .linops import (
    RngStream,
    LinearFit,
    rademacher_matrix,
    spectral_top,
    linear_fit,
    polynomial_fit,
    trace_inverse_gram,
)
from .signal_model import (
    SparseChannel,
    TrainingSequence,
    ConvolutionBasis,
    ReceivedSignal,
    gen_sparse_channel,
    gen_training,
    build_convolution,
    transmit,
    snr_to_sigma,
    max_sparsity,
)
from .measurement import (
    MeasurementMatrix,
    EffectiveMatrix,
    EigFit,
    gen_measurement,
    project,
    effective,
    min_rank,
    lambda_fit,
)
from .estimators import (
    HNConfig,
    ThresholdModel,
    ThresholdSet,
    PeaCsTrace,
    sliding_correlator,
    max_energy,
    hn_threshold,
    hn_recover,
    calibrate_threshold_model,
    threshold_set,
    pea_cs,
    matching_pursuit,
    dantzig_selector,
)
from .analysis import (
    CrbReport,
    PowerCheckReport,
    crb_unstructured,
    crb_structured,
    mse,
    power_check,
    power_montecarlo,
    hoeffding_bound,
)
from .harness import Harness, Trial
from .results import ResultTable, ResultRow, OracleTable, emit_csv, read_csv
