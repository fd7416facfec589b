"""Two-bit federated aggregation: library, service, and simulation harness."""

from .aggregation import (
    BitAssignment,
    GlobalModelState,
    VoteTally,
    aggregate_round,
    assign_locations,
    reconstruct_parameter,
    vote_bit,
)
from .fixedpoint import FixedPointConfig, SignedFixedPoint, bit_at, decode, encode
from .harness import (
    RoundMetrics,
    SimulationConfig,
    dp_fedavg_aggregate,
    emit_metrics,
    fedavg_aggregate,
    run_simulation,
)
from .mapping import TwoBitUpdateMatrix, location_for_row, map_update
from .privacy import (
    OutputDistribution,
    PrivacyReport,
    epsilon_theoretical,
    output_distribution,
    pair_ratio,
    privacy_report,
    worst_case_ratio,
)
from .protocol import DownlinkMessage, OverheadReport, UplinkFrame, pack, unpack, uplink_overhead
from .training import (
    DataPartition,
    Dataset,
    ModelSpec,
    SynthSpec,
    TrainConfig,
    evaluate,
    gradient,
    init_model,
    load_idx,
    local_train,
    partition_dataset,
    synth_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "BitAssignment",
    "DataPartition",
    "Dataset",
    "DownlinkMessage",
    "FixedPointConfig",
    "GlobalModelState",
    "ModelSpec",
    "OutputDistribution",
    "OverheadReport",
    "PrivacyReport",
    "RoundMetrics",
    "SignedFixedPoint",
    "SimulationConfig",
    "SynthSpec",
    "TrainConfig",
    "TwoBitUpdateMatrix",
    "UplinkFrame",
    "VoteTally",
    "aggregate_round",
    "assign_locations",
    "bit_at",
    "decode",
    "dp_fedavg_aggregate",
    "emit_metrics",
    "encode",
    "epsilon_theoretical",
    "evaluate",
    "fedavg_aggregate",
    "gradient",
    "init_model",
    "load_idx",
    "local_train",
    "location_for_row",
    "map_update",
    "output_distribution",
    "pack",
    "pair_ratio",
    "partition_dataset",
    "privacy_report",
    "reconstruct_parameter",
    "run_simulation",
    "synth_dataset",
    "unpack",
    "uplink_overhead",
    "vote_bit",
    "worst_case_ratio",
]
