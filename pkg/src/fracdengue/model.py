"""Parameters, reproduction number, equilibria, and stability diagnostics.

The long-time analysis rests on the proportionality e^(-mu t) D^(1-a)[e^(mu t) F]
-> mu^(1-a) F, which turns the reduced 3-state system (S_H, I_H, I_V) into an
autonomous ODE whose equilibria and Jacobian are available in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DomainError

__all__ = [
    "ModelParams",
    "NgmPair",
    "EquilibriumReport",
    "RouthRecord",
    "r0",
    "ngm",
    "disease_free_equilibrium",
    "endemic_equilibrium",
    "endemic_stability",
    "classical_limit_rhs",
    "steady_state_residual",
]

# fitted posterior means (San Juan 2010-11 weekly series), with the literal
# per-day demographic constants used alongside them
TABLE4_MEANS = dict(
    N_H=2347833.0,
    mu_H=2.4456e-4,
    alpha=0.2352,
    beta=0.9918,
    p=0.9918,
    beta_VH=0.0135,
    beta_HV=0.9405,
    b=3.7578,
    mu_V=0.1428,
    C=1.0,
    delta=1.0470,
)


@dataclass(frozen=True)
class ModelParams:
    """Epidemiological constants and fractional orders, all per day.

    alpha: order of the vector-to-human transmission operator;
    beta: order of the recovery operator; p: order of the human-to-vector
    transmission operator, with 0 < beta <= p <= 1 (nonnegativity of the
    human infection-age kernel). Pi_V = delta * N_H.
    """

    N_H: float
    mu_H: float
    alpha: float
    beta: float
    p: float
    beta_VH: float
    beta_HV: float
    b: float
    mu_V: float
    C: float
    delta: float

    def __post_init__(self):
        for name in ("N_H", "mu_H", "b", "mu_V", "C", "delta"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 < self.beta <= self.p <= 1.0:
            raise DomainError(
                f"orders must satisfy 0 < beta <= p <= 1, got beta={self.beta}, p={self.p}"
            )
        for name in ("beta_VH", "beta_HV"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise DomainError(f"{name} must be in (0, 1), got {v}")

    @property
    def Pi_V(self) -> float:
        return self.delta * self.N_H

    @classmethod
    def table4(cls, **overrides) -> "ModelParams":
        """Fitted San Juan parameter set, optionally overridden field-wise."""
        d = dict(TABLE4_MEANS)
        d.update(overrides)
        return cls(**d)

    def classical(self) -> "ModelParams":
        """Same parameters with all orders set to 1 and C = 1."""
        return replace(self, alpha=1.0, beta=1.0, p=1.0, C=1.0)

    # effective rate constants of the Theorem-1-reduced system
    @property
    def lam1(self) -> float:
        """Vector-to-human transmission coefficient b^a beta_VH mu_V^(1-a)/N_H."""
        return self.b ** self.alpha * self.beta_VH * self.mu_V ** (1.0 - self.alpha) / self.N_H

    @property
    def lam3(self) -> float:
        """Human-to-vector transmission coefficient b^p beta_HV mu_H^(1-p)/(N_H C^p)."""
        return (self.b ** self.p * self.beta_HV * self.mu_H ** (1.0 - self.p)
                / (self.N_H * self.C ** self.p))

    @property
    def recovery_rate(self) -> float:
        """Effective long-time recovery rate mu_H^(1-beta)/C^beta."""
        return self.mu_H ** (1.0 - self.beta) / self.C ** self.beta


@dataclass(frozen=True)
class NgmPair:
    """Next-generation matrices at the disease-free point."""

    F: np.ndarray
    V: np.ndarray
    FVinv: np.ndarray

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.FVinv))))


@dataclass(frozen=True)
class RouthRecord:
    A1: float
    B1: float
    C1: float
    discriminant: float  # A1*B1 - C1

    @property
    def stable(self) -> bool:
        return self.A1 > 0 and self.B1 > 0 and self.C1 > 0 and self.discriminant > 0

    def roots(self) -> np.ndarray:
        """Roots of lambda^3 + A1 lambda^2 + B1 lambda + C1."""
        return np.roots([1.0, self.A1, self.B1, self.C1])


@dataclass(frozen=True)
class EquilibriumReport:
    kind: str  # "disease-free" | "endemic"
    state: tuple[float, float, float]  # (S_H*, I_H*, I_V*)
    r0: float
    residual: float
    routh: Optional[RouthRecord] = None


def r0(params: ModelParams) -> float:
    """Basic reproduction number of the reduced system (closed form)."""
    P = params
    num = (P.Pi_V * P.b ** (P.alpha + P.p) * P.beta_VH * P.beta_HV * P.C ** P.beta)
    den = (P.N_H * P.C ** P.p * P.mu_V ** (1.0 + P.alpha)
           * P.mu_H ** (P.p - P.beta) * (P.mu_H ** P.beta * P.C ** P.beta + 1.0))
    return math.sqrt(num / den)


def ngm(params: ModelParams) -> NgmPair:
    """New-infection and transition matrices F, V and their product F V^-1."""
    P = params
    f12 = P.b ** P.alpha * P.beta_VH * P.mu_V ** (1.0 - P.alpha)  # S_H* = N_H cancels /N_H
    f21 = (P.b ** P.p * P.beta_HV * P.Pi_V * P.mu_H ** (1.0 - P.p)
           / (P.N_H * P.C ** P.p * P.mu_V))
    F = np.array([[0.0, f12], [f21, 0.0]])
    V = np.diag([P.mu_H + P.recovery_rate, P.mu_V])
    FVinv = F / np.diag(V)[None, :]
    return NgmPair(F=F, V=V, FVinv=FVinv)


def classical_limit_rhs(params: ModelParams, state) -> np.ndarray:
    """RHS of the reduced (S_H, I_H, I_V) system with operators at their mu^(1-a) limits."""
    P = params
    S_H, I_H, I_V = state
    force = P.lam1 * S_H * I_V
    dS = P.mu_H * P.N_H - force - P.mu_H * S_H
    dI = force - P.recovery_rate * I_H - P.mu_H * I_H
    dV = P.lam3 * (P.Pi_V / P.mu_V - I_V) * I_H - P.mu_V * I_V
    return np.array([dS, dI, dV])


def steady_state_residual(params: ModelParams, state) -> float:
    """Max absolute defect of the reduced steady-state equations at ``state``."""
    return float(np.max(np.abs(classical_limit_rhs(params, state))))


def disease_free_equilibrium(params: ModelParams) -> EquilibriumReport:
    state = (params.N_H, 0.0, 0.0)
    return EquilibriumReport(
        kind="disease-free",
        state=state,
        r0=r0(params),
        residual=steady_state_residual(params, state),
    )


def endemic_equilibrium(params: ModelParams) -> Optional[EquilibriumReport]:
    """Unique positive equilibrium when r0 > 1; None otherwise."""
    P = params
    rho = r0(P)
    if rho <= 1.0:
        return None
    mb = P.mu_H ** P.beta * P.C ** P.beta
    A = P.lam1 + (P.b ** (P.alpha + P.p) * P.beta_VH * P.beta_HV
                  * P.mu_H ** (1.0 + P.beta - P.p) * P.C ** P.beta
                  / (P.N_H * P.mu_V ** P.alpha * P.C ** P.p * (mb + 1.0)))
    I_V = P.mu_H * (rho ** 2 - 1.0) / A
    S_H = P.mu_H * P.N_H / (P.lam1 * I_V + P.mu_H)
    I_H = (P.b ** P.alpha * P.beta_VH * P.mu_V ** (1.0 - P.alpha) * mb
           * S_H * I_V / (P.mu_H * (mb + 1.0) * P.N_H))
    state = (S_H, I_H, I_V)
    return EquilibriumReport(
        kind="endemic",
        state=state,
        r0=rho,
        residual=steady_state_residual(params, state),
        routh=endemic_stability(params),
    )


def endemic_stability(params: ModelParams) -> RouthRecord:
    """Characteristic-cubic coefficients at the endemic point (requires r0 > 1)."""
    P = params
    rho = r0(P)
    if rho <= 1.0:
        raise DomainError(f"endemic stability needs r0 > 1, got r0={rho}")
    mb = P.mu_H ** P.beta * P.C ** P.beta
    A = P.lam1 + (P.b ** (P.alpha + P.p) * P.beta_VH * P.beta_HV
                  * P.mu_H ** (1.0 + P.beta - P.p) * P.C ** P.beta
                  / (P.N_H * P.mu_V ** P.alpha * P.C ** P.p * (mb + 1.0)))
    I_V = P.mu_H * (rho ** 2 - 1.0) / A
    S_H = P.mu_H * P.N_H / (P.lam1 * I_V + P.mu_H)
    I_H = (P.b ** P.alpha * P.beta_VH * P.mu_V ** (1.0 - P.alpha) * mb
           * S_H * I_V / (P.mu_H * (mb + 1.0) * P.N_H))
    K = P.mu_H + P.recovery_rate
    x = P.mu_H + P.lam1 * I_V      # S_H-equation diagonal
    y = P.mu_V + P.lam3 * I_H      # I_V-equation diagonal
    A1 = x + y + K
    B1 = K * (x + P.lam3 * I_H) + x * y
    C1 = K * (P.mu_V * P.lam1 * I_V + x * P.lam3 * I_H)
    return RouthRecord(A1=A1, B1=B1, C1=C1, discriminant=A1 * B1 - C1)
