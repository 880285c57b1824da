"""Tempered fractional-order vector-borne disease toolkit.

Library layout:
    specfun      incomplete gamma, Mittag-Leffler, recovery kernels
    fracops      discretization weights and tempered history sums
    model        parameters, R0, equilibria, stability
    solver       implicit-theta time stepper and incidence extraction
    optctl       cost functional, adjoint system, forward-backward sweep
    calibrate    SSE objective, LHS + least squares, DRAM MCMC, Geweke
    sensitivity  LHS/PRCC global sensitivity
    cli          batch command line (`fracdengue <command> --config ...`)

The time-march kernel is compiled (fracdengue._core) when the extension is
built, with a NumPy fallback; see fracdengue.backend.
"""

__version__ = "0.1.0"

from .fracops import GridSpec, TemperedOrder
from .model import ModelParams, endemic_equilibrium, ngm, r0
from .solver import StateVector, Trajectory, incidence_series, simulate

__all__ = [
    "__version__",
    "GridSpec",
    "TemperedOrder",
    "ModelParams",
    "StateVector",
    "Trajectory",
    "r0",
    "ngm",
    "endemic_equilibrium",
    "simulate",
    "incidence_series",
]
