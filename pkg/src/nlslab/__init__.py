"""Numerical laboratory for threshold dynamics of the radial focusing
energy-critical NLS: ground-state functionals, linearized spectrum,
exponential near-solution series, PDE evolution, and trajectory
classification."""

__version__ = "0.1.0"

from . import (  # noqa: F401,E402
    diagnostics,
    discretization,
    evolver,
    experiments,
    ground_state,
    linearized_spectrum,
    series_builder,
)
