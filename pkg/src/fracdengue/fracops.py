"""Discretization of the tempered Riemann-Liouville derivative.

The operator D^(1-a)[y(t) e^(mu t)] is discretized on a uniform grid by
integrating the kernel (t-s)^(a-1) e^(-mu(t-s)) exactly against a piecewise
constant (rectangle) or piecewise linear (trapezoid) interpolant of y and
finite-differencing the resulting history integral H(t). The implicit
theta-method blends the two: theta=1 is pure rectangle, theta=0 pure
trapezoid.

Every weight is an incomplete-gamma difference that depends only on the lag
i-j, so a table for one (order, rate, grid) triple stores O(n) lag arrays;
per-row weight views are materialized on demand.

The damped operator value e^(-mu t) D^(1-a)[y e^(mu t)] at step i is the
theta-blend bracket times e^(mu h/2)/h: the finite difference
[H(t_{i+1}) - H(t_i)]/h is centered at t_{i+1/2}, so the damping factor is
evaluated there too. (Evaluating it at t_{i+1} instead leaves a persistent
relative bias of mu h/2 on every operator value.)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "GridSpec",
    "TemperedOrder",
    "WeightTable",
    "rectangle_weights",
    "trapezoid_weights",
    "tempered_history_sum",
    "tempered_deriv_const_oracle",
    "asymptotic_rate",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform time grid: n_steps steps of size h (days), blend parameter theta."""

    h: float
    n_steps: int
    theta: float = 0.0

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError(f"step size must be positive, got h={self.h}")
        if not 0.0 <= self.theta <= 1.0:
            raise DomainError(f"theta must be in [0, 1], got {self.theta}")
        if self.n_steps < 1:
            raise DomainError(f"need at least one step, got n_steps={self.n_steps}")

    @property
    def t_max(self) -> float:
        return self.n_steps * self.h

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.h


@dataclass(frozen=True)
class TemperedOrder:
    """Order exponent a in (0, 1] and tempering rate mu > 0 (1/day)."""

    order: float
    temper_rate: float

    def __post_init__(self):
        if not 0.0 < self.order <= 1.0:
            raise DomainError(f"order must be in (0, 1], got {self.order}")
        if not self.temper_rate > 0:
            raise DomainError(f"temper rate must be positive, got {self.temper_rate}")


def _lig_grid(a: float, mu: float, h: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """gamma(mu m h, a) and gamma(mu m h, a+1) for m = 0..n+1, unregularized."""
    x = mu * h * np.arange(n + 2)
    ga = special.gammainc(a, x) * math.exp(math.lgamma(a))
    ga1 = special.gammainc(a + 1.0, x) * math.exp(math.lgamma(a + 1.0))
    return ga, ga1


class WeightTable:
    """All weight families for one (order, rate, grid) triple, indexed by lag.

    Lag arrays run over m = i - j = 0..n_steps. Row views are exposed through
    :func:`rectangle_weights` / :func:`trapezoid_weights`; the solver consumes
    the pre-combined ``known_kernel``/``known_tail``/``implicit_weight`` and
    the midpoint damping factor.
    """

    def __init__(self, ord: TemperedOrder, grid: GridSpec):
        self.order = ord
        self.grid = grid
        a, mu, h, n = ord.order, ord.temper_rate, grid.h, grid.n_steps
        theta = grid.theta
        ga, ga1 = _lig_grid(a, mu, h, n)
        ca = math.exp(math.lgamma(a))
        mh = mu * h * np.arange(n + 2)

        # rectangle: omega^R[m], omegatilde^R[m]
        self.omega_R = (ga[1:] - ga[:-1]) / (mu ** a * ca)
        self.omegat_R = np.empty(n + 1)
        self.omegat_R[0] = 0.0
        self.omegat_R[1:] = (ga[0:n] - ga[1:n + 1]) / (mu ** a * ca)

        # trapezoid: omega^T, U^T, omegatilde^T, Utilde^T
        c1 = mu ** (a + 1.0) * ca
        self.omega_T = (ga1[1:] - ga1[:-1] - mh[:-1] * (ga[1:] - ga[:-1])) / c1
        self.U_T = np.empty(n + 1)
        self.U_T[0] = 0.0
        self.U_T[1:] = self.omega_T[:-1]  # t_i-kernel integrals are the shifted t_{i+1} ones
        self.omegat_T = (mh[1:] * (ga[1:] - ga[:-1]) - (ga1[1:] - ga1[:-1])) / c1
        self.Ut_T = np.empty(n + 1)
        self.Ut_T[0] = 0.0
        self.Ut_T[1:] = self.omegat_T[:-1]

        e = math.exp(-mu * h)
        cR = self.omega_R + e * self.omegat_R
        cT0 = self.omega_T - e * self.U_T
        cT1 = self.omegat_T - e * self.Ut_T

        # single known-part kernel: known_i = sum_{m=1}^{i} K[m] y[i+1-m]
        #                                     + known_tail[i] * y[0]
        self.known_kernel = np.empty(n + 1)
        self.known_kernel[0] = 0.0
        self.known_kernel[1:] = theta * cR[1:] + (1.0 - theta) / h * (cT1[1:] + cT0[:-1])
        self.known_tail = (1.0 - theta) / h * cT0
        self.implicit_weight = theta * cR[0] + (1.0 - theta) / h * cT1[0]
        self.damp = math.exp(mu * h / 2.0)

    def known_part(self, y: np.ndarray, i: int) -> float:
        """Damped known portion of the operator at step i (uses y[0..i])."""
        s = float(np.dot(self.known_kernel[1:i + 1], y[i:0:-1])) if i >= 1 else 0.0
        s += self.known_tail[i] * y[0]
        return s * self.damp / self.grid.h

    def new_weight(self) -> float:
        """Damped coefficient of the implicit node y_{i+1}."""
        return self.implicit_weight * self.damp / self.grid.h

    def operator_value(self, y: np.ndarray, i: int) -> float:
        """Damped discrete tempered derivative at step i (uses y[0..i+1])."""
        return self.known_part(y, i) + self.new_weight() * y[i + 1]


_table_cache: dict[tuple, WeightTable] = {}


def get_table(ord: TemperedOrder, grid: GridSpec) -> WeightTable:
    key = (ord.order, ord.temper_rate, grid.h, grid.n_steps, grid.theta)
    tab = _table_cache.get(key)
    if tab is None:
        tab = WeightTable(ord, grid)
        if len(_table_cache) > 64:
            _table_cache.clear()
        _table_cache[key] = tab
    return tab


def rectangle_weights(i: int, grid: GridSpec, ord: TemperedOrder):
    """Row i of the rectangle families: (omega^R_{j,i}, omegatilde^R_{j,i}), j=0..i."""
    if i < 0 or i >= grid.n_steps + 1:
        raise DomainError(f"step index {i} outside grid with {grid.n_steps} steps")
    tab = get_table(ord, grid)
    lags = np.arange(i, -1, -1)
    return tab.omega_R[lags], tab.omegat_R[lags]


def trapezoid_weights(i: int, grid: GridSpec, ord: TemperedOrder):
    """Row i of the trapezoid families: (omega^T, U^T, omegatilde^T, Utilde^T), j=0..i."""
    if i < 0 or i >= grid.n_steps + 1:
        raise DomainError(f"step index {i} outside grid with {grid.n_steps} steps")
    tab = get_table(ord, grid)
    lags = np.arange(i, -1, -1)
    return tab.omega_T[lags], tab.U_T[lags], tab.omegat_T[lags], tab.Ut_T[lags]


def tempered_history_sum(hist: np.ndarray, i: int, grid: GridSpec,
                         ord: TemperedOrder) -> float:
    """Damped discrete operator value at step i from nodal values hist[0..i+1].

    hist must hold exactly the i+2 values y(t_0)..y(t_{i+1}), the last one
    being the caller's trial value for the implicit node. The result is
    linear in every entry and converges to
    :func:`tempered_deriv_const_oracle` on constant histories as h -> 0.
    """
    hist = np.asarray(hist, dtype=float)
    if hist.ndim != 1 or len(hist) != i + 2:
        raise ValueError(
            f"history must hold t_0..t_{i + 1}: expected {i + 2} values, got {hist.shape}"
        )
    return get_table(ord, grid).operator_value(hist, i)


def tempered_deriv_const_oracle(ord: TemperedOrder, t: float) -> float:
    """Exact e^(-mu t) D^(1-a)[e^(mu t) * 1] = mu^(1-a)[gamma(mu t,a) + (mu t)^(a-1) e^(-mu t)]/Gamma(a)."""
    if not t > 0:
        raise DomainError(f"time must be positive, got t={t}")
    a, mu = ord.order, ord.temper_rate
    x = mu * t
    reg = float(special.gammainc(a, x))
    return mu ** (1.0 - a) * (reg + x ** (a - 1.0) * math.exp(-x) / math.gamma(a))


def asymptotic_rate(ord: TemperedOrder, y: float) -> float:
    """Long-time proportionality constant mu^y replacing the tempered derivative."""
    if not 0.0 < y <= 1.0:
        raise DomainError(f"exponent must be in (0, 1], got {y}")
    return ord.temper_rate ** y
