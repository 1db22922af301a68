from ._fcm import (
    evaluate,
    generate_dataset,
    load_motion,
    monte_carlo_bound_check,
    motion_families,
    reconstruct,
    sample,
    score_prompt,
    train_stage,
    variance_bound,
)

__all__ = [
    "evaluate",
    "generate_dataset",
    "load_motion",
    "monte_carlo_bound_check",
    "motion_families",
    "reconstruct",
    "sample",
    "score_prompt",
    "train_stage",
    "variance_bound",
]
