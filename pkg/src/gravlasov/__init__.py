"""Particle simulation of the truncated gravitational Vlasov-Poisson system."""

__version__ = "0.1.0"

from .initial_data import (Ensemble, InitialDataParams, TruncationParams, eval_f0,
                           eval_f0_truncated, sample_ensemble, truncated_mass)
from .gravity import SofteningParams, field_direct, field_tree, potential_energy
from .characteristics import TrajectoryRecord, integrate, leapfrog_step
from .diagnostics import energy_report, kinetic_energy
from .study import StudySpec, convergence_pair, run_family, velocity_bound_check

__all__ = [
    "Ensemble", "InitialDataParams", "TruncationParams", "eval_f0", "eval_f0_truncated",
    "sample_ensemble", "truncated_mass", "SofteningParams", "field_direct", "field_tree",
    "potential_energy", "TrajectoryRecord", "integrate", "leapfrog_step", "energy_report",
    "kinetic_energy", "StudySpec", "convergence_pair", "run_family", "velocity_bound_check",
]
