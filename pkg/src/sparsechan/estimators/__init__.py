"""
Channel estimators and their harness plug-ins
"""

from sparsechan.estimators.dantzig import DantzigEstimator, dantzig_selector
from sparsechan.estimators.greedy import MatchingPursuitEstimator, matching_pursuit
from sparsechan.estimators.initial import (
    MaxEnergyEstimator,
    SlidingCorrelatorEstimator,
    max_energy,
    sliding_correlator,
)
from sparsechan.estimators.parallel import (
    PeaCsEstimator,
    PeaCsTrace,
    pea_cs,
    select_threshold_index,
)
from sparsechan.estimators.thresholding import (
    FixedDivisorHN,
    HNConfig,
    OracleDivisorHN,
    ThresholdModel,
    ThresholdSet,
    calibrate_threshold_model,
    hn_config_for,
    hn_recover,
    hn_threshold,
    threshold_set,
)

BUILTIN_ESTIMATORS = {
    "sliding": SlidingCorrelatorEstimator,
    "max_energy": MaxEnergyEstimator,
    "hn_oracle_p": OracleDivisorHN,
    "hn_fixed_p": FixedDivisorHN,
    "pea_cs": PeaCsEstimator,
    "mp": MatchingPursuitEstimator,
    "ds": DantzigEstimator,
}
