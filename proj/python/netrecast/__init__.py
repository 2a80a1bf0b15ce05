"""Block-wise recasting of trained CNNs (C++ core)."""

from ._netrecast import (
    Network,
    NetrecastError,
    analyze,
    arch_text,
    preset_names,
    run_cli,
    synth_dataset,
    transform_plan,
)

__all__ = [
    "Network",
    "NetrecastError",
    "analyze",
    "arch_text",
    "preset_names",
    "run_cli",
    "synth_dataset",
    "transform_plan",
]
