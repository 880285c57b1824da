"""Optimal control: cost functional, adjoint system, Pontryagin updates, sweep.

Controls are node-aligned schedules on the simulation grid: psi (individual
precaution, cuts both transmission routes by 1-psi), zeta (recruitment
reduction), kappa (adult vector kill, death rate mu_V + c_m kappa).

The adjoint system is linear in the costates with coefficients read off the
stored forward trajectory; the tempered operator values it needs (order p on
I_H, order alpha on I_V) are exactly the per-step records kept by the solver,
so the backward pass reuses the forward-pass weight tables implicitly.
lambda_3 solves a homogeneous terminal-value problem and is identically zero.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConvergenceError, DomainError
from .fracops import GridSpec
from .model import ModelParams
from .solver import (
    StateVector,
    StepSolveConfig,
    Trajectory,
    cumulative_cases,
    simulate,
)

__all__ = [
    "CostWeights",
    "ControlSchedule",
    "AdjointTrajectory",
    "SweepConfig",
    "SweepResult",
    "StrategyReport",
    "STRATEGIES",
    "cost",
    "adjoint_backward",
    "control_update",
    "forward_backward_sweep",
    "run_strategy",
    "strategy_table",
]

# active control sets of the seven intervention strategies
STRATEGIES = {
    "S1": frozenset({"psi"}),
    "S2": frozenset({"zeta"}),
    "S3": frozenset({"kappa"}),
    "S4": frozenset({"psi", "zeta"}),
    "S5": frozenset({"psi", "kappa"}),
    "S6": frozenset({"zeta", "kappa"}),
    "S7": frozenset({"psi", "zeta", "kappa"}),
}


@dataclass(frozen=True)
class CostWeights:
    A1: float = 1.0
    A2: float = 10.0
    B1: float = 5e-10
    B2: float = 1.0
    B3: float = 5e-10
    B4: float = 1.0
    B5: float = 5e-10
    B6: float = 5.0
    c_m: float = 0.5

    def __post_init__(self):
        for name in ("A1", "A2", "B1", "B2", "B3", "B4", "B5", "B6"):
            if getattr(self, name) < 0:
                raise DomainError(f"cost weight {name} must be nonnegative")
        for name in ("B2", "B4", "B6"):
            if not getattr(self, name) > 0:
                raise DomainError(f"quadratic weight {name} must be positive")
        if not 0.2 <= self.c_m <= 0.8:
            raise DomainError(f"kill efficacy c_m must be in [0.2, 0.8], got {self.c_m}")


@dataclass
class ControlSchedule:
    psi: np.ndarray
    zeta: np.ndarray
    kappa: np.ndarray
    c_m: float = 0.5

    def __post_init__(self):
        self.psi = np.clip(np.asarray(self.psi, dtype=float), 0.0, 1.0)
        self.zeta = np.clip(np.asarray(self.zeta, dtype=float), 0.0, 1.0)
        self.kappa = np.clip(np.asarray(self.kappa, dtype=float), 0.0, 1.0)
        if not (len(self.psi) == len(self.zeta) == len(self.kappa)):
            raise DomainError("control components must share the grid")

    @classmethod
    def zeros(cls, grid: GridSpec, c_m: float = 0.5) -> "ControlSchedule":
        z = np.zeros(grid.n_steps + 1)
        return cls(psi=z.copy(), zeta=z.copy(), kappa=z.copy(), c_m=c_m)

    def sup_distance(self, other: "ControlSchedule") -> float:
        return float(max(np.abs(self.psi - other.psi).max(),
                         np.abs(self.zeta - other.zeta).max(),
                         np.abs(self.kappa - other.kappa).max()))

    def masked(self, active: frozenset) -> "ControlSchedule":
        """Zero out inactive components."""
        return ControlSchedule(
            psi=self.psi if "psi" in active else np.zeros_like(self.psi),
            zeta=self.zeta if "zeta" in active else np.zeros_like(self.zeta),
            kappa=self.kappa if "kappa" in active else np.zeros_like(self.kappa),
            c_m=self.c_m,
        )

    def export_csv(self, path, grid: GridSpec):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "psi", "zeta", "kappa"])
            for t, a, b, c in zip(grid.times, self.psi, self.zeta, self.kappa):
                w.writerow([f"{t:.10g}", f"{a:.10g}", f"{b:.10g}", f"{c:.10g}"])


@dataclass
class AdjointTrajectory:
    lam: np.ndarray  # (n+1, 5)

    @property
    def lam1(self): return self.lam[:, 0]
    @property
    def lam2(self): return self.lam[:, 1]
    @property
    def lam3(self): return self.lam[:, 2]
    @property
    def lam4(self): return self.lam[:, 3]
    @property
    def lam5(self): return self.lam[:, 4]


@dataclass(frozen=True)
class SweepConfig:
    relaxation: float = 0.5
    conv_tol: float = 1e-4
    max_sweeps: int = 200
    backoff: float = 0.5       # relaxation multiplier when the residual grows
    min_relaxation: float = 1.0 / 32.0

    def __post_init__(self):
        if not 0.0 < self.relaxation <= 1.0:
            raise DomainError("relaxation must be in (0, 1]")
        if not self.conv_tol > 0:
            raise DomainError("conv_tol must be positive")
        if self.max_sweeps < 1:
            raise DomainError("max_sweeps must be >= 1")


@dataclass
class SweepResult:
    schedule: ControlSchedule
    trajectory: Trajectory
    adjoint: AdjointTrajectory
    cost_history: list
    converged: bool
    n_sweeps: int
    residual: float


@dataclass
class StrategyReport:
    name: str
    active: frozenset
    mean_psi: float
    mean_zeta: float
    mean_kappa: float
    total_cases: float
    cost: float
    converged: bool
    n_sweeps: int
    schedule: Optional["ControlSchedule"] = None


def cost(traj: Trajectory, schedule: ControlSchedule, weights: CostWeights,
         grid: GridSpec) -> float:
    """Trapezoidal quadrature of the running cost over the grid nodes."""
    if traj.states.shape[0] != grid.n_steps + 1 or len(schedule.psi) != grid.n_steps + 1:
        raise DomainError("trajectory, schedule and grid do not share a node count")
    W = weights
    N_V = traj.S_V + traj.I_V
    N_H = traj.S_H + traj.I_H + traj.R_H
    integrand = (W.A1 * N_V + W.A2 * traj.I_H
                 + W.B1 * traj.S_V * schedule.zeta + 0.5 * W.B2 * schedule.zeta ** 2
                 + W.B3 * N_V * schedule.kappa + 0.5 * W.B4 * schedule.kappa ** 2
                 + W.B5 * N_H * schedule.psi + 0.5 * W.B6 * schedule.psi ** 2)
    return float(np.trapezoid(integrand, dx=grid.h))


def _adjoint_coefficients(params: ModelParams, traj: Trajectory,
                          schedule: ControlSchedule, weights: CostWeights, i: int):
    """(M, g) of d(lambda)/dt = M lambda + g at node i, coefficients from the forward pass."""
    P = params
    W = weights
    n = traj.grid.n_steps
    j = min(i, n - 1)  # operator records exist per step; reuse the last at the final node
    G_a = traj.op_IV[j]
    G_p = traj.op_IHp[j]
    ps, ze, ka = schedule.psi[i], schedule.zeta[i], schedule.kappa[i]
    one = 1.0 - ps
    a_t = P.b ** P.alpha * P.beta_VH / P.N_H * one * G_a
    c_t = P.b ** P.p * P.mu_H ** (1.0 - P.p) * P.beta_HV * traj.S_V[i] * one / (P.N_H * P.C ** P.p)
    d_t = P.b ** P.p * P.beta_HV / (P.N_H * P.C ** P.p) * one * G_p
    e_t = P.b ** P.alpha * P.mu_V ** (1.0 - P.alpha) * P.beta_VH * one * traj.S_H[i] / P.N_H
    Kb = P.recovery_rate
    mv = P.mu_V + schedule.c_m * ka
    M = np.zeros((5, 5))
    M[0, 0] = a_t + P.mu_H
    M[0, 1] = -a_t
    M[1, 1] = P.mu_H + Kb
    M[1, 2] = -Kb
    M[1, 3] = c_t
    M[1, 4] = -c_t
    M[2, 2] = P.mu_H
    M[3, 3] = d_t + mv
    M[3, 4] = -d_t
    M[4, 0] = e_t
    M[4, 1] = -e_t
    M[4, 4] = mv
    g = np.array([0.0, -W.A2, 0.0,
                  -W.A1 - W.B1 * ze - W.B3 * ka,
                  -W.A1 - W.B3 * ka])
    return M, g


def adjoint_backward(traj: Trajectory, schedule: ControlSchedule, params: ModelParams,
                     weights: CostWeights, grid: GridSpec) -> AdjointTrajectory:
    """Integrate the five costate equations backward from lambda(T) = 0.

    Implicit Euler in reverse time: (I + h M(t_i)) lambda_i = lambda_{i+1} - h g(t_i).
    """
    n = grid.n_steps
    lam = np.zeros((n + 1, 5))
    I5 = np.eye(5)
    h = grid.h
    for i in range(n - 1, -1, -1):
        M, g = _adjoint_coefficients(params, traj, schedule, weights, i)
        try:
            lam[i] = np.linalg.solve(I5 + h * M, lam[i + 1] - h * g)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"adjoint step {i} is singular: {exc}") from exc
    return AdjointTrajectory(lam=lam)


def control_update(traj: Trajectory, adjoint: AdjointTrajectory, params: ModelParams,
                   weights: CostWeights) -> ControlSchedule:
    """Clamped Pontryagin stationarity values at every grid node."""
    P = params
    W = weights
    lam = adjoint.lam
    n = traj.grid.n_steps
    if lam.shape[0] != n + 1:
        raise DomainError("adjoint and trajectory are not aligned")
    G_a = np.append(traj.op_IV, traj.op_IV[-1])
    G_p = np.append(traj.op_IHp, traj.op_IHp[-1])
    N_V = traj.S_V + traj.I_V
    flux_HV = P.b ** P.p * P.beta_HV / (P.N_H * P.C ** P.p) * traj.S_V * G_p
    flux_VH = P.b ** P.alpha * P.beta_VH / P.N_H * traj.S_H * G_a
    psi = ((lam[:, 4] - lam[:, 3]) * flux_HV + (lam[:, 1] - lam[:, 0]) * flux_VH
           - W.B5 * P.N_H) / W.B6
    zeta = (lam[:, 3] * P.Pi_V - W.B1 * traj.S_V) / W.B2
    kappa = (weights.c_m * (lam[:, 3] * traj.S_V + lam[:, 4] * traj.I_V)
             - W.B3 * N_V) / W.B4
    return ControlSchedule(psi=np.clip(psi, 0, 1), zeta=np.clip(zeta, 0, 1),
                           kappa=np.clip(kappa, 0, 1), c_m=weights.c_m)


def forward_backward_sweep(params: ModelParams, init: StateVector, grid: GridSpec,
                           weights: CostWeights = CostWeights(),
                           active: frozenset = frozenset(),
                           cfg: SweepConfig = SweepConfig(),
                           solve_cfg: StepSolveConfig = StepSolveConfig(),
                           backend: str = "auto") -> SweepResult:
    """Fixed-point iteration forward simulate -> backward adjoint -> clamped update.

    The stopping rule is the pre-relaxation fixed-point residual
    sup|update - current| < conv_tol, so at convergence the returned schedule
    satisfies the Pontryagin characterization to conv_tol. The relaxation
    factor backs off geometrically whenever the residual grows (the sweep
    tends to oscillate between saturated control patterns otherwise).
    """
    schedule = ControlSchedule.zeros(grid, c_m=weights.c_m)
    cost_history: list = []
    relax = cfg.relaxation
    prev_res = math.inf
    converged = False
    best = None  # lowest-residual (schedule, traj, adjoint, res) triple seen
    for sweep in range(1, cfg.max_sweeps + 1):
        traj = simulate(params, init, grid, solve_cfg, controls=schedule, backend=backend)
        adj = adjoint_backward(traj, schedule, params, weights, grid)
        update = control_update(traj, adj, params, weights).masked(active)
        cost_history.append(cost(traj, schedule, weights, grid))
        res = schedule.sup_distance(update)
        if best is None or res < best[3]:
            best = (schedule, traj, adj, res)
        if res < cfg.conv_tol:
            # return the checked triple: traj and adjoint belong to this
            # schedule, so the Pontryagin residual of the result is res
            converged = True
            break
        if res > prev_res:
            relax = max(relax * cfg.backoff, cfg.min_relaxation)
        prev_res = res
        schedule = ControlSchedule(
            psi=relax * update.psi + (1 - relax) * schedule.psi,
            zeta=relax * update.zeta + (1 - relax) * schedule.zeta,
            kappa=relax * update.kappa + (1 - relax) * schedule.kappa,
            c_m=weights.c_m,
        )
    schedule, traj, adj, res = best
    return SweepResult(schedule=schedule, trajectory=traj, adjoint=adj,
                       cost_history=cost_history, converged=converged,
                       n_sweeps=sweep, residual=res)


def run_strategy(name: str, params: ModelParams, init: StateVector, grid: GridSpec,
                 weights: CostWeights = CostWeights(),
                 cfg: SweepConfig = SweepConfig(),
                 solve_cfg: StepSolveConfig = StepSolveConfig(),
                 backend: str = "auto") -> StrategyReport:
    """Optimize one named strategy (S1..S7) or the uncontrolled baseline."""
    if name == "baseline":
        active = frozenset()
    else:
        try:
            active = STRATEGIES[name]
        except KeyError:
            raise DomainError(f"unknown strategy {name!r}; expected S1..S7 or 'baseline'")
    result = forward_backward_sweep(params, init, grid, weights, active, cfg,
                                    solve_cfg, backend=backend)
    sched = result.schedule
    return StrategyReport(
        name=name,
        active=active,
        mean_psi=float(sched.psi.mean()),
        mean_zeta=float(sched.zeta.mean()),
        mean_kappa=float(sched.kappa.mean()),
        total_cases=cumulative_cases(result.trajectory),
        cost=result.cost_history[-1],
        converged=result.converged,
        n_sweeps=result.n_sweeps,
        schedule=sched,
    )


def strategy_table(reports, path=None):
    """Rows (strategy, mean_psi, mean_zeta, mean_kappa, total_cases, cost, converged)."""
    rows = [["strategy", "mean_psi", "mean_zeta", "mean_kappa",
             "total_cases", "cost", "converged"]]
    for r in reports:
        rows.append([r.name, f"{r.mean_psi:.6g}", f"{r.mean_zeta:.6g}",
                     f"{r.mean_kappa:.6g}", f"{r.total_cases:.6g}",
                     f"{r.cost:.10g}", str(r.converged)])
    if path is not None:
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    return rows
