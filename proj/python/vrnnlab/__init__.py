"""Sequence generative modelling with variational recurrent networks."""

from vrnnlab._core import (
    ConfigError,
    ContractError,
    Dataset,
    DomainError,
    FormatError,
    Model,
    NumericError,
    ParseError,
    ShapeError,
    Stats,
    compute_stats,
    denormalize,
    load_stats,
    load_strokes,
    load_wav,
    normalize,
    read_vseq,
    save_stats,
    split_dataset,
    synth_dataset,
    write_vseq,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "Dataset",
    "DomainError",
    "FormatError",
    "Model",
    "NumericError",
    "ParseError",
    "ShapeError",
    "Stats",
    "compute_stats",
    "denormalize",
    "load_stats",
    "load_strokes",
    "load_wav",
    "normalize",
    "read_vseq",
    "save_stats",
    "split_dataset",
    "synth_dataset",
    "write_vseq",
]
