from ._ssrl import (
    beta_ce,
    ce_loss,
    class_names,
    consistency_l2,
    dice_per_class,
    generate_phantoms,
    param_count,
    run_cli,
    thresholded_ce,
    train,
)

__all__ = [
    "beta_ce",
    "ce_loss",
    "class_names",
    "consistency_l2",
    "dice_per_class",
    "generate_phantoms",
    "param_count",
    "run_cli",
    "thresholded_ce",
    "train",
]
