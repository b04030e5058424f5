"""Partition-guided online FFN-channel pruning simulator."""

from ._core import (
    CHECKPOINT_FORMAT,
    SPEC_FORMAT,
    AttnDims,
    Checkpoint,
    ModelConfig,
    Partition,
    __version__,
    build_partition,
    channel_importance,
    ffn_flops,
    ffn_pruning_ratio,
    generate,
    init_checkpoint,
    load_checkpoint,
    presets,
    rank_dynamics,
    run_spec,
    save_checkpoint,
    select_step_active,
)

__all__ = [
    "CHECKPOINT_FORMAT",
    "SPEC_FORMAT",
    "AttnDims",
    "Checkpoint",
    "ModelConfig",
    "Partition",
    "__version__",
    "build_partition",
    "channel_importance",
    "ffn_flops",
    "ffn_pruning_ratio",
    "generate",
    "init_checkpoint",
    "load_checkpoint",
    "presets",
    "rank_dynamics",
    "run_spec",
    "save_checkpoint",
    "select_step_active",
]
