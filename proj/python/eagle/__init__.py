"""Python bindings for the EAGLE survival core."""

from ._eagle import (
    EagleError,
    attribute,
    c_index,
    chi_square_sf,
    cox_loss,
    evaluate,
    kaplan_meier,
    log_rank,
    preset_table,
    reduction_ratio,
    synth,
    tertile_stratify,
    train,
)

__all__ = [
    "EagleError",
    "attribute",
    "c_index",
    "chi_square_sf",
    "cox_loss",
    "evaluate",
    "kaplan_meier",
    "log_rank",
    "preset_table",
    "reduction_ratio",
    "synth",
    "tertile_stratify",
    "train",
]
