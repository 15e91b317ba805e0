"""Multi-agent skill discovery: Python access to the C++ core."""

from ._masd import (
    CheckpointError,
    Config,
    ConfigError,
    Trainer,
    TrainingError,
    analyze_csv,
    exact_mi_xor,
    mutual_information,
    pseudo_reward,
    sampled_mi_xor,
    skill_cluster_score,
)

__all__ = [
    "CheckpointError",
    "Config",
    "ConfigError",
    "Trainer",
    "TrainingError",
    "analyze_csv",
    "exact_mi_xor",
    "mutual_information",
    "pseudo_reward",
    "sampled_mi_xor",
    "skill_cluster_score",
]
