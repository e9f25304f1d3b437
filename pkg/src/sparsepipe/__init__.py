"""Structured pre-defined sparse MLPs and a cycle-level simulator of an
edge-parallel, junction-pipelined training accelerator."""

from .topology import (
    ConfigError,
    JunctionPattern,
    NetworkConfig,
    attention_degrees,
    enumerate_densities,
    find_disconnected,
    fully_connected,
    generate_from_out_degrees,
    generate_random_unstructured,
    generate_structured_random,
    junction_summary,
    load_pattern,
    save_pattern,
)
from .clashfree import (
    AccessSchedule,
    ClashFreeSpec,
    InvalidSpecError,
    address_schedule,
    count_patterns,
    generate_spec,
    load_spec,
    save_spec,
    to_connection_pattern,
    validate_z_net,
    verify_clash_free,
)
from .engine import (
    SparseModel,
    TrainConfig,
    backward,
    evaluate,
    forward,
    grad_check,
    init_model,
    load_checkpoint,
    prune_threshold,
    save_checkpoint,
    train,
    update_step,
    weight_histogram,
)
from .pipesim import (
    PipelineConfig,
    PipelineTrace,
    SimulationError,
    StorageReport,
    build_schedule,
    simulate,
    storage_report,
    throughput_report,
)
from .datasets import (
    Dataset,
    load_idx,
    load_mnist,
    pad_features,
    pca_reduce,
    split_train_val,
    synthetic_dataset,
)

__version__ = "0.1.0"
