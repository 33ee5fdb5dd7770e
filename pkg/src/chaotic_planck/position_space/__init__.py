"""Grid dynamics and the pointer measurement model."""
from .grid import (
    ContinuityReport,
    EhrenfestReport,
    GridSeries,
    GridState,
    coherent_state,
    continuity_residual,
    ehrenfest_check,
    gaussian_packet,
    harmonic_potential,
    make_grid,
    propagate,
    split_step,
    velocity_field,
)
from .measurement import (
    MeasurementModel,
    MeasurementState,
    OutcomeStats,
    evolve_measurement,
    sample_outcomes,
    write_histogram,
)

__all__ = [
    "ContinuityReport", "EhrenfestReport", "GridSeries", "GridState", "coherent_state",
    "continuity_residual", "ehrenfest_check", "gaussian_packet", "harmonic_potential",
    "make_grid", "propagate", "split_step", "velocity_field",
    "MeasurementModel", "MeasurementState", "OutcomeStats", "evolve_measurement",
    "sample_outcomes", "write_histogram",
]
