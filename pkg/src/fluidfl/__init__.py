"""fluidfl: deterministic federated-learning simulator with
straggler-adaptive invariant dropout, plus Random and Ordered baselines and
an executable sparse-gradient variance analysis."""

from .analysis import (BoundCheck, empirical_second_moment,
                       expected_second_moment, keep_probabilities,
                       probability_mass_bound, rate_from_slack,
                       slack_identity_residual)
from .config import ExperimentConfig, parse_config_file, parse_config_text
from .data import (Dataset, Partition, load_csv_dataset, partition_dataset,
                   synth_gaussian_blobs)
from .dropout import (NeuronMask, SubModel, extract, full_mask, kept_count,
                      mask_invariant, mask_ordered, mask_random, merge)
from .errors import FluidError
from .experiment import (run_experiment, sweep_straggler_ratio,
                         sweep_threshold)
from .invariance import (CalibrationState, grow_threshold, init_threshold,
                         invariant_fraction, neuron_score, vote_candidates)
from .nn import (DenseLayer, Gradients, Model, backward, forward, init_model,
                 sgd_step)
from .orchestrator import (RoundRecord, RunResult, RunSettings, Simulation,
                           StragglerPolicy, compute_speedup,
                           identify_stragglers, select_rate, weighted_eval)
from .simclient import (ClientReport, ClientSpec, LoadWindow, evaluate,
                        local_train, simulate_epoch_time)

__version__ = "0.1.0"

__all__ = [
    "BoundCheck", "CalibrationState", "ClientReport", "ClientSpec",
    "Dataset", "DenseLayer", "ExperimentConfig", "FluidError", "Gradients",
    "LoadWindow", "Model", "NeuronMask", "Partition", "RoundRecord",
    "RunResult", "RunSettings", "Simulation", "StragglerPolicy", "SubModel",
    "backward", "compute_speedup", "empirical_second_moment", "evaluate",
    "expected_second_moment", "extract", "forward", "full_mask",
    "grow_threshold", "identify_stragglers", "init_model", "init_threshold",
    "invariant_fraction", "keep_probabilities", "kept_count",
    "load_csv_dataset", "local_train", "mask_invariant", "mask_ordered",
    "mask_random", "merge", "neuron_score", "parse_config_file",
    "parse_config_text", "partition_dataset", "probability_mass_bound",
    "rate_from_slack", "run_experiment", "select_rate", "sgd_step",
    "simulate_epoch_time", "slack_identity_residual", "sweep_straggler_ratio",
    "sweep_threshold", "synth_gaussian_blobs", "vote_candidates",
    "weighted_eval",
]
