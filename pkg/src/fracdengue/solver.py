"""Implicit-theta time-stepper for the full 5-compartment system.

Each step solves the coupled bilinear system for (S_H, I_H, R_H, S_V, I_V) at
t_{i+1}: S_V, I_V, S_H are eliminated as rational functions of the implicit
I_H node and the remaining scalar equation is solved by safeguarded Newton.
History sums enter through cached lag-kernel weight tables (see fracops).
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import backend as _backend
from .errors import DomainError, StepSolveError
from .fracops import GridSpec, TemperedOrder, get_table
from .model import ModelParams

log = logging.getLogger(__name__)

__all__ = [
    "StateVector",
    "StepSolveConfig",
    "StepCoefficients",
    "Trajectory",
    "step_coefficients",
    "solve_step",
    "simulate",
    "incidence_series",
    "cumulative_cases",
    "reference_classical_simulate",
]

COLUMNS = ("S_H", "I_H", "R_H", "S_V", "I_V")


@dataclass(frozen=True)
class StateVector:
    S_H: float
    I_H: float
    R_H: float
    S_V: float
    I_V: float

    def as_array(self) -> np.ndarray:
        return np.array([self.S_H, self.I_H, self.R_H, self.S_V, self.I_V])

    @classmethod
    def from_array(cls, a) -> "StateVector":
        return cls(*(float(v) for v in a))

    def validate_region(self, params: ModelParams, tol: float = 1e-9):
        """Check membership of the invariant region (human conservation, vector cap)."""
        a = self.as_array()
        if np.any(a < 0):
            raise DomainError(f"negative compartment in initial state {self}")
        if abs(self.S_H + self.I_H + self.R_H - params.N_H) > tol * params.N_H:
            raise DomainError(
                f"S_H + I_H + R_H = {self.S_H + self.I_H + self.R_H} != N_H = {params.N_H}"
            )


@dataclass(frozen=True)
class StepSolveConfig:
    """Newton tolerance and the negative-undershoot policy.

    Undershoots within max(clip_tol * N_H, clip_abs, clip_peak * running
    compartment peak) of zero are clipped to zero and counted; anything more
    negative is a hard error. The non-roundoff terms exist because hard
    control schedules can drive the tempered operator of a crashing history
    genuinely negative, pushing near-eradicated compartments below zero at
    any step size by an amount that scales with the compartment's former
    size; a genuine instability overshoots by amounts comparable to the
    running scale and still errors out.
    """

    tol: float = 1e-10
    max_iter: int = 100
    damping: float = 1.0
    clip_tol: float = 1e-12   # relative to N_H
    clip_abs: float = 0.5     # individuals
    clip_peak: float = 1e-3   # relative to the compartment's running maximum

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")


@dataclass(frozen=True)
class StepCoefficients:
    A_SH: float; B_SH: float; C_SH: float
    A_IH: float; B_IH: float; C_IH: float; D_IH: float
    A_RH: float; B_RH: float; C_RH: float
    A_SV: float; B_SV: float; C_SV: float
    A_IV: float; B_IV: float; C_IV: float; D_IV: float


@dataclass
class Trajectory:
    grid: GridSpec
    states: np.ndarray            # (n+1, 5) columns S_H, I_H, R_H, S_V, I_V
    infection_flux: np.ndarray    # (n,) new-infection rate into I_H during step i
    op_IV: np.ndarray             # (n,) damped operator value on I_V (order alpha)
    op_IHp: np.ndarray            # (n,) damped operator value on I_H (order p)
    n_clipped: int = 0

    @property
    def t(self) -> np.ndarray:
        return self.grid.times

    @property
    def S_H(self): return self.states[:, 0]
    @property
    def I_H(self): return self.states[:, 1]
    @property
    def R_H(self): return self.states[:, 2]
    @property
    def S_V(self): return self.states[:, 3]
    @property
    def I_V(self): return self.states[:, 4]

    @property
    def final_state(self) -> StateVector:
        return StateVector.from_array(self.states[-1])

    def export_csv(self, path):
        """Write `t,S_H,I_H,R_H,S_V,I_V,flux` rows (flux of the step starting at t)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + list(COLUMNS) + ["flux"])
            flux = np.append(self.infection_flux, np.nan)
            for k, t in enumerate(self.t):
                w.writerow([f"{t:.10g}"] + [f"{v:.10g}" for v in self.states[k]]
                           + ["" if np.isnan(flux[k]) else f"{flux[k]:.10g}"])


def _operator_tables(params: ModelParams, grid: GridSpec):
    tab_IV = get_table(TemperedOrder(params.alpha, params.mu_V), grid)
    tab_IHb = get_table(TemperedOrder(params.beta, params.mu_H), grid)
    tab_IHp = get_table(TemperedOrder(params.p, params.mu_H), grid)
    return tab_IV, tab_IHb, tab_IHp


def _control_arrays(controls, n):
    if controls is None:
        z = np.zeros(n + 1)
        return z, z, z, 0.0
    psi = np.asarray(controls.psi, dtype=float)
    zeta = np.asarray(controls.zeta, dtype=float)
    kappa = np.asarray(controls.kappa, dtype=float)
    for name, arr in (("psi", psi), ("zeta", zeta), ("kappa", kappa)):
        if len(arr) < n + 1:
            raise DomainError(f"control {name} has {len(arr)} nodes, grid needs {n + 1}")
        if arr.min() < -1e-12 or arr.max() > 1.0 + 1e-12:
            raise DomainError(f"control {name} not in [0, 1]")
    return psi, zeta, kappa, float(controls.c_m)


def step_coefficients(i: int, states: np.ndarray, params: ModelParams,
                      grid: GridSpec, controls=None) -> StepCoefficients:
    """Coefficients of the bilinear step system at step i.

    ``states`` rows 0..i must hold the accepted nodal values. Control values
    are taken at node i, matching the march in :func:`simulate`.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim != 2 or states.shape[1] != 5 or states.shape[0] < i + 1:
        raise DomainError(
            f"need state history through step {i}, got array of shape {states.shape}"
        )
    P = params
    h = grid.h
    tab_IV, tab_IHb, tab_IHp = _operator_tables(P, grid)
    IV = states[:, 4]
    IH = states[:, 1]
    KV = tab_IV.known_part(IV, i)
    KB = tab_IHb.known_part(IH, i)
    KP = tab_IHp.known_part(IH, i)
    wIV = tab_IV.new_weight()
    wIHb = tab_IHb.new_weight()
    wIHp = tab_IHp.new_weight()

    psi, zeta, kappa, cm = _control_arrays(controls, i)
    ps, ze, ka = psi[i], zeta[i], kappa[i]
    fV = P.b ** P.alpha * P.beta_VH / P.N_H * (1.0 - ps)
    fH = P.b ** P.p * P.beta_HV / (P.N_H * P.C ** P.p) * (1.0 - ps)
    cbi = P.C ** -P.beta
    muVc = P.mu_V + cm * ka

    A_SH = 1.0 + P.mu_H * h + fV * h * KV
    B_SH = fV * h * wIV
    C_SH = -states[i, 0] - h * P.mu_H * P.N_H
    B_IH = 1.0 + h * P.mu_H + cbi * h * wIHb
    D_IH = -states[i, 1] + cbi * h * KB
    A_SV = 1.0 + muVc * h + fH * h * KP
    B_SV = fH * h * wIHp
    return StepCoefficients(
        A_SH=A_SH, B_SH=B_SH, C_SH=C_SH,
        A_IH=1.0 + h * P.mu_H - A_SH, B_IH=B_IH, C_IH=-B_SH, D_IH=D_IH,
        A_RH=1.0 + h * P.mu_H, B_RH=1.0 + h * P.mu_H - B_IH,
        C_RH=-states[i, 2] - states[i, 1] - D_IH,
        A_SV=A_SV, B_SV=B_SV, C_SV=-states[i, 3] - h * P.Pi_V * (1.0 - ze),
        A_IV=1.0 + h * muVc - A_SV, B_IV=-B_SV, C_IV=1.0 + h * muVc,
        D_IV=-states[i, 4],
    )


def solve_step(i: int, states: np.ndarray, params: ModelParams, grid: GridSpec,
               cfg: StepSolveConfig = StepSolveConfig(), controls=None) -> StateVector:
    """Solve one implicit step, returning the state at t_{i+1}.

    Reference implementation used by tests and by step-level callers; the
    production march in :func:`simulate` runs the same algebra inside the
    selected backend kernel.
    """
    c = step_coefficients(i, states, params, grid, controls)

    def parts(x):
        sv = -c.C_SV / (c.A_SV + c.B_SV * x)
        iv = -(c.D_IV + (c.A_IV + c.B_IV * x) * sv) / c.C_IV
        sh = -c.C_SH / (c.A_SH + c.B_SH * iv)
        return sv, iv, sh

    x = float(states[i, 1])
    lo, hi = 0.0, params.N_H
    ok = False
    f = math.inf
    for _ in range(cfg.max_iter):
        sv, iv, sh = parts(x)
        f = c.A_IH * sh + c.B_IH * x + c.C_IH * sh * iv + c.D_IH
        scale = abs(c.B_IH * x) + abs(c.D_IH) + abs(c.A_IH * sh) + abs(c.C_IH * sh * iv) + 1.0
        if abs(f) <= max(cfg.tol, 64 * np.finfo(float).eps * scale) \
                or hi - lo <= 4e-16 * max(1.0, hi):
            ok = True
            break
        if f > 0:
            hi = min(hi, x)
        else:
            lo = max(lo, x)
        eps = 1e-7 * max(abs(x), 1.0)
        fp = (c.A_IH * parts(x + eps)[2] + c.B_IH * (x + eps)
              + c.C_IH * parts(x + eps)[2] * parts(x + eps)[1] + c.D_IH - f) / eps
        xn = x - cfg.damping * f / fp if fp != 0 else 0.5 * (lo + hi)
        if not (lo <= xn <= hi):
            xn = 0.5 * (lo + hi)
        x = xn
    if not ok:
        raise StepSolveError(
            f"implicit step {i} did not converge (|residual|={abs(f):.3e})",
            step=i, residual=abs(f),
        )
    sv, iv, sh = parts(x)
    rh = -(c.B_RH * x + c.C_RH) / c.A_RH
    out = np.array([sh, x, rh, sv, iv])
    hist_peak = float(np.max(states[: i + 1], initial=0.0))
    clip = max(cfg.clip_tol * params.N_H, cfg.clip_abs, cfg.clip_peak * hist_peak)
    if out.min() < -clip:
        raise StepSolveError(
            f"step {i} produced a negative compartment ({out.min():.3e}); "
            "the scheme is unstable here, try a smaller h",
            step=i, residual=-out.min(),
        )
    if out.min() < 0:
        log.info("step %d: clipping undershoot %.3e to zero", i, out.min())
        out = np.clip(out, 0.0, None)
    return StateVector.from_array(out)


def simulate(params: ModelParams, init: StateVector, grid: GridSpec,
             cfg: StepSolveConfig = StepSolveConfig(), controls=None,
             backend: str = "auto") -> Trajectory:
    """March the implicit-theta scheme over the grid.

    Records, per step, the new-infection rate into I_H (flux) and the damped
    operator values needed by the adjoint system.
    """
    init.validate_region(params)
    n = grid.n_steps
    P = params
    tab_IV, tab_IHb, tab_IHp = _operator_tables(P, grid)
    psi, zeta, kappa, cm = _control_arrays(controls, n)

    core = _backend.get_backend(backend)
    h = grid.h

    def op_args(tab):
        s = tab.damp / h
        return (np.ascontiguousarray(tab.known_kernel * s),
                np.ascontiguousarray(tab.known_tail * s),
                tab.implicit_weight * s)

    kIV, tIV, wIV = op_args(tab_IV)
    kIHb, tIHb, wIHb = op_args(tab_IHb)
    kIHp, tIHp, wIHp = op_args(tab_IHp)

    states, op_IV, op_IHp, flux, n_clip, status, bad_step, resid = core.simulate_loop(
        n, h, init.as_array(),
        P.mu_H, P.N_H, P.C ** -P.beta,
        P.b ** P.alpha * P.beta_VH / P.N_H,
        P.b ** P.p * P.beta_HV / (P.N_H * P.C ** P.p),
        P.mu_V, P.Pi_V,
        kIV, tIV, wIV, kIHb, tIHb, wIHb, kIHp, tIHp, wIHp,
        np.ascontiguousarray(psi), np.ascontiguousarray(zeta),
        np.ascontiguousarray(kappa), cm,
        cfg.tol, cfg.max_iter, cfg.damping,
        max(cfg.clip_tol * P.N_H, cfg.clip_abs), cfg.clip_peak,
    )
    if status == 1:
        raise StepSolveError(
            f"implicit step {bad_step} did not converge (|residual|={resid:.3e})",
            step=bad_step, residual=resid,
        )
    if status == 2:
        raise StepSolveError(
            f"step {bad_step} produced a negative compartment ({-resid:.3e}); "
            "the scheme is unstable here, try a smaller h",
            step=bad_step, residual=resid,
        )
    if n_clip:
        log.info("simulate: clipped %d small undershoots to zero", n_clip)
    return Trajectory(grid=grid, states=states, infection_flux=flux,
                      op_IV=op_IV, op_IHp=op_IHp, n_clipped=int(n_clip))


def cumulative_cases(traj: Trajectory) -> float:
    """Total new human infections over the run (flux clamped at zero)."""
    return float(traj.grid.h * np.clip(traj.infection_flux, 0.0, None).sum())


def incidence_series(traj: Trajectory, week_length: float = 7.0) -> np.ndarray:
    """Weekly new-case counts: the flux integral partitioned into week bins.

    Per-step flux is clamped at zero before aggregation (the discrete
    operator can undershoot on sharply forced histories; the continuous
    incidence is nonnegative). week_length must be a multiple of h.
    """
    h = traj.grid.h
    spw = week_length / h
    if abs(spw - round(spw)) > 1e-9:
        raise DomainError(f"week length {week_length} is not a multiple of h={h}")
    spw = int(round(spw))
    flux = np.clip(traj.infection_flux, 0.0, None)
    n_weeks = len(flux) // spw
    if n_weeks == 0:
        raise DomainError("trajectory shorter than one week")
    binned = flux[: n_weeks * spw].reshape(n_weeks, spw).sum(axis=1) * h
    return binned


def reference_classical_simulate(params: ModelParams, init: StateVector,
                                 grid: GridSpec, rtol: float = 1e-9) -> Trajectory:
    """Adaptive-step integration of the classical (all orders = 1) system.

    Test oracle only: requires alpha = beta = p = 1, evaluates at the grid
    nodes, and reports the same flux/operator records as simulate.
    """
    P = params
    if not (P.alpha == 1.0 and P.beta == 1.0 and P.p == 1.0):
        raise DomainError("reference integrator requires alpha = beta = p = 1")

    def rhs(t, y):
        sh, ih, rh, sv, iv = y
        force = P.b * P.beta_VH / P.N_H * sh * iv
        forcev = P.b * P.beta_HV / (P.N_H * P.C) * sv * ih
        rec = ih / P.C
        return [P.mu_H * P.N_H - force - P.mu_H * sh,
                force - rec - P.mu_H * ih,
                rec - P.mu_H * rh,
                P.Pi_V - forcev - P.mu_V * sv,
                forcev - P.mu_V * iv]

    sol = solve_ivp(rhs, [0.0, grid.t_max], init.as_array(), method="LSODA",
                    rtol=rtol, atol=1e-8, dense_output=True)
    if not sol.success:
        raise StepSolveError(f"reference integration failed: {sol.message}")
    states = sol.sol(grid.times).T.copy()
    mid = sol.sol(grid.times[:-1] + grid.h / 2.0)
    flux = P.b * P.beta_VH / P.N_H * mid[0] * mid[4]
    op_IV = mid[4].copy()
    op_IHp = mid[1].copy()
    return Trajectory(grid=grid, states=states, infection_flux=flux,
                      op_IV=op_IV, op_IHp=op_IHp)
