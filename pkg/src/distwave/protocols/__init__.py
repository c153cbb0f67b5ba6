"""Distributed estimation protocols: schedules, local phase, aggregation, Lepski."""

from .lepski import (
    lepski_select_l2,
    lepski_select_linfty,
    nested_estimates,
    tau_for_zero_selection,
)
from .pipeline import (
    AggregatedEstimate,
    LocalTransmission,
    ProtocolRun,
    aggregate,
    replay,
    run_local,
    run_protocol,
    select_level,
)
from .schedule import AdaptiveLayout, Schedule, adaptive_layout, build_schedule
from .transcript import read_transcript, write_transcript

__all__ = [
    "AdaptiveLayout",
    "AggregatedEstimate",
    "LocalTransmission",
    "ProtocolRun",
    "Schedule",
    "adaptive_layout",
    "aggregate",
    "build_schedule",
    "lepski_select_l2",
    "lepski_select_linfty",
    "nested_estimates",
    "read_transcript",
    "replay",
    "run_local",
    "run_protocol",
    "select_level",
    "tau_for_zero_selection",
    "write_transcript",
]
