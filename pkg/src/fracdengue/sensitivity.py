"""Global sensitivity: LHS sampling and partial rank correlation coefficients.

Seven parameters are screened (alpha, beta, b, beta_HV, beta_VH, delta, mu_V;
beta = p tied) against two responses: the basic reproduction number and total
cases over the simulation horizon. PRCC conditions each rank-transformed
column on all the others via linear regression and correlates the residuals.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import stats

from .errors import DomainError, StepSolveError
from .fracops import GridSpec
from .model import ModelParams, r0
from .solver import StateVector, cumulative_cases, simulate

log = logging.getLogger(__name__)

__all__ = [
    "GSA_PARAMS",
    "GsaBounds",
    "PrccRow",
    "PrccReport",
    "prcc",
    "response_r0",
    "response_total_cases",
    "run_gsa",
]

GSA_PARAMS = ("alpha", "beta", "b", "beta_HV", "beta_VH", "delta", "mu_V")


@dataclass(frozen=True)
class GsaBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != (len(GSA_PARAMS),) or not np.all(hi > lo):
            raise DomainError(f"need {len(GSA_PARAMS)} (lower < upper) pairs")

    @classmethod
    def default(cls) -> "GsaBounds":
        lo = [0.05, 0.05, 1.7, 0.01, 0.01, 1.0, 0.14]
        hi = [0.99, 0.99, 7.0, 0.99, 0.99, 5.0, 1.75]
        return cls(lower=np.array(lo), upper=np.array(hi))


@dataclass
class PrccRow:
    parameter: str
    response: str
    prcc: float
    p_value: float
    significant: bool
    n_effective: int


@dataclass
class PrccReport:
    rows: list
    n_failed: int = 0

    def by_param(self, response: str) -> dict:
        return {r.parameter: r for r in self.rows if r.response == response}

    def export_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["parameter", "response", "prcc", "p_value", "n_effective"])
            for r in self.rows:
                w.writerow([r.parameter, r.response, f"{r.prcc:.6g}",
                            f"{r.p_value:.6g}", r.n_effective])


def prcc(X: np.ndarray, y: np.ndarray, names=GSA_PARAMS,
         response: str = "response", alpha_level: float = 0.05):
    """PRCC with p-values for each column of X against y.

    Rank-transform everything (average ranks on ties). For column j, regress
    rank(x_j) and rank(y) on the other columns' ranks plus an intercept and
    correlate the residuals; p from t = r sqrt((n-2-k)/(1-r^2)) with k
    conditioned covariates. Constant columns are reported with NaN and p=1.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if len(y) != n:
        raise DomainError("responses must align with the sample matrix rows")
    k = d - 1
    if n <= k + 2:
        raise DomainError(f"need more than {k + 2} samples for {d} columns")
    if len(names) != d:
        raise DomainError("one name per column required")
    Xr = np.empty_like(X)
    for j in range(d):
        Xr[:, j] = stats.rankdata(X[:, j])
    yr = stats.rankdata(y)
    rows = []
    for j in range(d):
        if np.ptp(X[:, j]) == 0:
            log.warning("PRCC: column %s is constant; ranks undefined", names[j])
            rows.append(PrccRow(parameter=names[j], response=response,
                                prcc=float("nan"), p_value=1.0,
                                significant=False, n_effective=n))
            continue
        others = np.delete(Xr, j, axis=1)
        design = np.column_stack([np.ones(n), others])
        bx, *_ = np.linalg.lstsq(design, Xr[:, j], rcond=None)
        by, *_ = np.linalg.lstsq(design, yr, rcond=None)
        rx = Xr[:, j] - design @ bx
        ry = yr - design @ by
        denom = np.sqrt(np.dot(rx, rx) * np.dot(ry, ry))
        r = float(np.dot(rx, ry) / denom) if denom > 0 else 0.0
        r = max(min(r, 1.0), -1.0)
        df = n - 2 - k
        if abs(r) >= 1.0:
            p = 0.0
        else:
            t = r * np.sqrt(df / (1.0 - r * r))
            p = float(2.0 * stats.t.sf(abs(t), df))
        rows.append(PrccRow(parameter=names[j], response=response, prcc=r,
                            p_value=p, significant=p < alpha_level, n_effective=n))
    return rows


def _gsa_params(row, base: ModelParams) -> ModelParams:
    alpha, beta, b, bHV, bVH, delta, mu_V = row
    return replace(base, alpha=alpha, beta=beta, p=beta, b=b, beta_HV=bHV,
                   beta_VH=bVH, delta=delta, mu_V=mu_V)


def response_r0(row, base: ModelParams) -> float:
    """Reproduction number with the seven screened entries replacing the base values."""
    return r0(_gsa_params(row, base))


def response_total_cases(row, grid: GridSpec, init: StateVector,
                         base: ModelParams) -> float:
    """Total cases over the horizon; raises StepSolveError on solver failure."""
    params = _gsa_params(row, base)
    start = replace_init_for_vector_cap(init, params)
    traj = simulate(params, start, grid)
    return cumulative_cases(traj)


def replace_init_for_vector_cap(init: StateVector, params: ModelParams) -> StateVector:
    """Rescale the vector compartments so N_V(0) matches the sampled vector cap.

    The screened parameters move Pi_V/mu_V across samples; keeping the split
    fractions of the nominal initial state avoids starting runs far outside
    the attracting set.
    """
    cap0 = init.S_V + init.I_V
    cap = params.Pi_V / params.mu_V
    if cap0 <= 0:
        return init
    s = cap / cap0
    return StateVector(S_H=init.S_H, I_H=init.I_H, R_H=init.R_H,
                       S_V=init.S_V * s, I_V=init.I_V * s)


def _cases_job(args):
    row, grid, init, base = args
    try:
        return response_total_cases(row, grid, init, base)
    except (StepSolveError, DomainError):
        return float("nan")


def run_gsa(bounds: Optional[GsaBounds] = None, n: int = 1000, seed=0,
            grid: Optional[GridSpec] = None, init: Optional[StateVector] = None,
            base: Optional[ModelParams] = None, workers: int = 1,
            alpha_level: float = 0.05) -> PrccReport:
    """LHS draw, evaluate both responses, PRCC per parameter per response.

    Deterministic given the seed. Rows whose total-cases run fails are
    dropped pairwise for that response and counted in n_failed.
    """
    bounds = bounds or GsaBounds.default()
    base = base or ModelParams.table4()
    if grid is None:
        grid = GridSpec(h=0.2, n_steps=int(round(388 / 0.2)), theta=0.0)
    if init is None:
        cap = base.Pi_V / base.mu_V
        init = StateVector(S_H=base.N_H - 500.0, I_H=500.0, R_H=0.0,
                           S_V=cap - 5000.0, I_V=5000.0)
    rng = np.random.default_rng(seed)
    d = len(GSA_PARAMS)
    u = (rng.permuted(np.tile(np.arange(n), (d, 1)), axis=1).T
         + rng.uniform(size=(n, d))) / n
    X = bounds.lower + u * (bounds.upper - bounds.lower)

    y_r0 = np.array([response_r0(X[i], base) for i in range(n)])
    jobs = [(X[i], grid, init, base) for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            y_cases = np.array(list(ex.map(_cases_job, jobs)))
    else:
        y_cases = np.array([_cases_job(j) for j in jobs])

    rows = prcc(X, y_r0, names=GSA_PARAMS, response="r0", alpha_level=alpha_level)
    good = np.isfinite(y_cases)
    n_failed = int(np.sum(~good))
    if n_failed:
        log.warning("run_gsa: %d of %d total-cases simulations failed and were dropped",
                    n_failed, n)
    if np.sum(good) > len(GSA_PARAMS) + 2:
        rows += prcc(X[good], y_cases[good], names=GSA_PARAMS,
                     response="total_cases", alpha_level=alpha_level)
    return PrccReport(rows=rows, n_failed=n_failed)
