"""Learning and modeling correlated measurement-frame noise on grid codes."""

from lace.counterfactual import (
    ChannelFamily,
    DEFAULT_T_GRID,
    build_family,
    family_load,
    family_save,
    interpolate,
    weight_histogram,
)
from lace.decoder import (
    DecoderPrior,
    LogicalErrorEstimate,
    logical_error_rate,
    ml_decode_bruteforce,
    mps_decode,
    sample_error,
)
from lace.dist import (
    EigenvalueVector,
    ProbDist,
    marginalize,
    project_simplex,
    wht_forward,
    wht_inverse,
    xor_convolve,
)
from lace.estimation import (
    LearnedChannel,
    bootstrap,
    channel_load,
    channel_save,
    correlation_matrix,
    empirical_dists,
    fit_decays,
    qubit_error_rates,
)
from lace.models import (
    FactorGraph,
    Model,
    blanket_search,
    build_model,
    conditional_entropy,
    cov_bound_check,
    cov_diff_norm,
    estimate_couplings,
    fit_model,
    jsd,
    model_dist,
    model_from_json,
    model_log_prob,
    model_to_json,
    sample_model,
)
from lace.pauli import CliffordTableau, PauliOp
from lace.protocol import (
    ExperimentPlan,
    ShotRecord,
    derive_rng,
    generate_sequence,
    plan_experiment,
    read_shot_records,
    write_shot_records,
)
from lace.sim import NoiseConfig, simulate_plan
from lace.surface import CodeLayout, build_layout, logical_class, syndrome

__version__ = "0.1.0"

__all__ = [
    "ChannelFamily",
    "CliffordTableau",
    "CodeLayout",
    "DEFAULT_T_GRID",
    "DecoderPrior",
    "EigenvalueVector",
    "ExperimentPlan",
    "FactorGraph",
    "LearnedChannel",
    "LogicalErrorEstimate",
    "Model",
    "NoiseConfig",
    "PauliOp",
    "ProbDist",
    "ShotRecord",
    "blanket_search",
    "bootstrap",
    "build_family",
    "build_layout",
    "build_model",
    "channel_load",
    "channel_save",
    "conditional_entropy",
    "correlation_matrix",
    "cov_bound_check",
    "cov_diff_norm",
    "derive_rng",
    "empirical_dists",
    "estimate_couplings",
    "family_load",
    "family_save",
    "fit_decays",
    "fit_model",
    "generate_sequence",
    "interpolate",
    "jsd",
    "logical_class",
    "logical_error_rate",
    "marginalize",
    "ml_decode_bruteforce",
    "model_dist",
    "model_from_json",
    "model_log_prob",
    "model_to_json",
    "mps_decode",
    "plan_experiment",
    "project_simplex",
    "qubit_error_rates",
    "read_shot_records",
    "sample_error",
    "sample_model",
    "simulate_plan",
    "syndrome",
    "weight_histogram",
    "wht_forward",
    "wht_inverse",
    "write_shot_records",
    "xor_convolve",
]
