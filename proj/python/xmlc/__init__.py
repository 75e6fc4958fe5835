"""Label-graph and auxiliary-mask multi-label text classifier.

The heavy lifting lives in the compiled ``_core`` extension; this package
re-exports it and adds the desk-scale settings used for synthetic corpora.
"""

from ._core import (
    ConfigError,
    DivergenceError,
    Error,
    InputError,
    MaskIndex,
    StalenessError,
    compute_metrics,
    config_keys,
    cooccurrence,
    generate_synthetic,
    preprocess,
    propagation_matrix,
    run_command,
    run_synthetic,
    subcommands,
)

# Mirrors configs/desk.conf in the source tree.
DESK = {
    "embedding_dim": "32",
    "filter_size": "3",
    "dropout": "0",
    "tau": "0.05",
    "lr": "0.003",
    "lr_decay": "0.97",
    "batch_size": "8",
    "max_epochs": "15",
    "patience": "5",
    "threshold": "0.5",
}

__all__ = [
    "DESK",
    "ConfigError",
    "DivergenceError",
    "Error",
    "InputError",
    "MaskIndex",
    "StalenessError",
    "compute_metrics",
    "config_keys",
    "cooccurrence",
    "generate_synthetic",
    "preprocess",
    "propagation_matrix",
    "run_command",
    "run_synthetic",
    "subcommands",
]
