"""Elastic frequency-domain waveform inversion by ADMM."""

from ._efwi import (
    EfwiError,
    Grid,
    brocher_vs,
    dual_damping_factor,
    project,
    read_grid,
    run_manifest,
    scenario,
    scenario_names,
    schedule_iterations,
    sketch_speedup_percent,
    write_grid,
)

__all__ = [
    "EfwiError",
    "Grid",
    "brocher_vs",
    "dual_damping_factor",
    "project",
    "read_grid",
    "run_manifest",
    "scenario",
    "scenario_names",
    "schedule_iterations",
    "sketch_speedup_percent",
    "write_grid",
]
