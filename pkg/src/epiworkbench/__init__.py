"""Pandemic-intervention workbench.

A calibrated stochastic epidemic simulator, a multi-objective intervention
environment with a Pareto-conditioned policy network, dataset calibration
and validation tooling, and a scenario service for interactive what-if
sessions.
"""

from .sde import (
    Compartments,
    DiseaseProfile,
    EffectiveRates,
    InterventionLevels,
    SimConfig,
    Trajectory,
    effective_rates,
    infectious_fraction,
    drift,
    step,
    simulate,
)

__version__ = "0.1.0"
