"""Exact second moments and transfer-matrix Monte Carlo for the 2D directed polymer.

Modules
-------
walk
    Random-walk kernels, replica overlaps and Green's functions.
coupling
    Disorder laws and the critical, quasi-critical and sub-critical windows.
moments
    Renewal recursions for exact second moments and condition checks.
sim
    Counter-based transfer-matrix simulation and the multiscale decomposition.
experiments
    Ensemble statistics and experiment drivers.
cli
    Command-line entry point (``dpre2d``).
"""
from .coupling import (GAUSSIAN, RADEMACHER, CouplingWindow, Critical, DisorderSpec, Law, QuasiCritical,
                       SubCritical, chaos_variance, delta_scale, log_mgf, resolve_window, solve_beta)
from .lattice import LatticeField, LatticeWindow, point_mass, uniform_ball
from .moments import (RenewalTable, renewal_function, second_moment_p2p, variance_averaged,
                      variance_restricted)
from .sim import (MultiscaleRecord, ScaleLadder, SimConfig, build_scale_ladder, run_field, run_multiscale,
                  run_partition)
from .walk import KernelTable, overlap, quadratic_form, srw_kernel

__version__ = "0.1.0"

__all__ = [
    "GAUSSIAN", "RADEMACHER", "CouplingWindow", "Critical", "DisorderSpec", "Law", "QuasiCritical",
    "SubCritical", "chaos_variance", "delta_scale", "log_mgf", "resolve_window", "solve_beta",
    "LatticeField", "LatticeWindow", "point_mass", "uniform_ball",
    "RenewalTable", "renewal_function", "second_moment_p2p", "variance_averaged", "variance_restricted",
    "MultiscaleRecord", "ScaleLadder", "SimConfig", "build_scale_ladder", "run_field", "run_multiscale",
    "run_partition", "KernelTable", "overlap", "quadratic_form", "srw_kernel",
]
