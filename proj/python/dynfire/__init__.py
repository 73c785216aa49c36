"""Dynamic auto-encoder wildfire forecasting."""

from ._core import (
    Dataset,
    EvalReport,
    GridStack,
    Model,
    TrainResult,
    auroc,
    compare,
    evaluate,
    generate_dataset,
    load_dataset,
    read_stack,
    temporal_split,
    train,
    ttur_step_sizes,
    variants,
    write_stack,
)

__all__ = [
    "Dataset",
    "EvalReport",
    "GridStack",
    "Model",
    "TrainResult",
    "auroc",
    "compare",
    "evaluate",
    "generate_dataset",
    "load_dataset",
    "read_stack",
    "temporal_split",
    "train",
    "ttur_step_sizes",
    "variants",
    "write_stack",
]
