"""Python access to the flowsilt simulator, moment oracle and kernel utilities."""

from ._flowsilt import (
    FlowsiltError,
    arrangement_count,
    classify,
    green,
    mixed_moment,
    mollified_integral,
    run_report,
    term_count,
    terminal_masses,
)

__all__ = [
    "FlowsiltError",
    "arrangement_count",
    "classify",
    "green",
    "mixed_moment",
    "mollified_integral",
    "run_report",
    "term_count",
    "terminal_masses",
]
