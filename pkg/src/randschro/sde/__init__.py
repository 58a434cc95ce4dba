"""Euler-type integrators for the limiting SDE/ODE families."""

from ._march import steps_for
from .carousel import CarouselError, CarouselState, boundary_exit, hyperbolic_radius, integrate_carousel
from .logtan import LogTanResult, integrate_logtan
from .matrix import MatrixKind, MatrixPath, continuum_phase, integrate_matrix, q_from_x
from .phase import (DerivativePaths, PhaseKind, PhasePathFamily, integrate_derivative, integrate_phase_family,
                    phase_terminal, sample_derivative_functional)
from .relative import (RelativeKind, RelativePhasePath, decaying_sigma_rho, integrate_relative_family,
                       sine_beta_segments, sine_beta_tmax, time_change, warp_to_decaying)

__all__ = [
    "CarouselError", "CarouselState", "DerivativePaths", "LogTanResult", "MatrixKind", "MatrixPath",
    "PhaseKind", "PhasePathFamily", "RelativeKind", "RelativePhasePath", "boundary_exit",
    "continuum_phase", "decaying_sigma_rho", "hyperbolic_radius", "integrate_carousel",
    "integrate_derivative", "integrate_logtan", "integrate_matrix", "integrate_phase_family",
    "integrate_relative_family", "phase_terminal", "q_from_x", "sample_derivative_functional",
    "sine_beta_segments", "sine_beta_tmax", "steps_for", "time_change", "warp_to_decaying",
]
