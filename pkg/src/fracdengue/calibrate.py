"""Calibration of free parameters and initial states to weekly incidence.

Free vector theta (11 components, beta = p tied):
    alpha, beta, beta_VH, beta_HV, b, delta, mu_V, S_H0, I_H0, S_V0, I_V0
R_H(0) is redundant by human conservation and derived as N_H - S_H0 - I_H0.

Pipeline: LHS multi-start bounded Nelder-Mead on the sum-of-squares objective,
then a delayed-rejection adaptive Metropolis chain started at the minimizer,
with a conjugate inverse-gamma update of the Gaussian noise variance and a
Geweke stationarity check.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import optimize

from .errors import DomainError, StepSolveError
from .fracops import GridSpec
from .model import ModelParams
from .solver import StateVector, StepSolveConfig, incidence_series, simulate

log = logging.getLogger(__name__)

__all__ = [
    "FREE_PARAMS",
    "ObservedSeries",
    "ParamBounds",
    "FitResult",
    "PosteriorChain",
    "build_model",
    "sse",
    "lhs_sample",
    "least_squares_fit",
    "dram_mcmc",
    "geweke_z",
    "synthetic_data",
    "posterior_summary",
]

FREE_PARAMS = ("alpha", "beta", "beta_VH", "beta_HV", "b", "delta", "mu_V",
               "S_H0", "I_H0", "S_V0", "I_V0")


@dataclass
class ObservedSeries:
    """Weekly case counts; week 1 covers days [0, 7)."""

    week: np.ndarray
    cases: np.ndarray

    def __post_init__(self):
        self.week = np.asarray(self.week, dtype=int)
        self.cases = np.asarray(self.cases, dtype=float)
        if len(self.week) != len(self.cases):
            raise DomainError("week and cases must have equal length")
        if len(self.week) and (np.any(np.diff(self.week) <= 0) or self.week[0] < 1):
            raise DomainError("week indices must be >= 1 and strictly increasing")
        if np.any(self.cases < 0):
            raise DomainError("case counts must be nonnegative")

    @classmethod
    def from_csv(cls, path) -> "ObservedSeries":
        weeks, cases = [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["week", "cases"]:
                raise DomainError(f"{path}: expected header 'week,cases', got {reader.fieldnames}")
            for row in reader:
                weeks.append(int(row["week"]))
                cases.append(float(row["cases"]))
        return cls(week=np.array(weeks), cases=np.array(cases))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["week", "cases"])
            for wk, c in zip(self.week, self.cases):
                w.writerow([int(wk), f"{c:.10g}"])


@dataclass(frozen=True)
class ParamBounds:
    """Box bounds; defaults to the model's 11 free parameters but works for
    any named vector (used by the analytic MCMC tests)."""

    lower: np.ndarray
    upper: np.ndarray
    names: tuple = FREE_PARAMS

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi):
            raise DomainError("lower and upper bounds must have equal length")
        if len(self.names) != len(lo):
            object.__setattr__(self, "names", tuple(f"p{j}" for j in range(len(lo))))
        else:
            object.__setattr__(self, "names", tuple(self.names))
        if not np.all(hi > lo):
            raise DomainError("each upper bound must exceed its lower bound")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise DomainError("bounds must be finite")

    @classmethod
    def default(cls, base: ModelParams) -> "ParamBounds":
        """Biological ranges for the rates/orders; state boxes scaled to the population."""
        cap = base.delta * base.N_H / base.mu_V
        lo = [0.05, 0.05, 0.001, 0.001, 1.7, 1.0, 0.14,
              0.90 * base.N_H, 0.0, 0.10 * cap, 0.0]
        hi = [0.99, 0.99, 0.20, 0.999, 7.0, 5.0, 1.75,
              0.9999 * base.N_H, 5e-4 * base.N_H, 1.5 * cap, 5e-4 * cap]
        return cls(lower=np.array(lo), upper=np.array(hi))

    def contains(self, theta) -> bool:
        t = np.asarray(theta, dtype=float)
        return bool(np.all(t >= self.lower) and np.all(t <= self.upper))

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def as_dict(self) -> dict:
        return {n: (float(l), float(u))
                for n, l, u in zip(self.names, self.lower, self.upper)}


@dataclass
class FitResult:
    theta_hat: np.ndarray
    sse: float
    n_starts: int
    converged: bool
    start_sse: Optional[np.ndarray] = None

    def as_dict(self) -> dict:
        d = {n: float(v) for n, v in zip(FREE_PARAMS, self.theta_hat)}
        d["sse"] = float(self.sse)
        d["n_starts"] = int(self.n_starts)
        d["converged"] = bool(self.converged)
        return d


@dataclass
class PosteriorChain:
    samples: np.ndarray        # (chain_len, d)
    log_post: np.ndarray
    acceptance_rate: float
    geweke: np.ndarray
    sigma2: np.ndarray
    names: tuple = FREE_PARAMS

    def export_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(self.names) + ["log_post"])
            for row, lp in zip(self.samples, self.log_post):
                w.writerow([f"{v:.10g}" for v in row] + [f"{lp:.10g}"])


def build_model(theta, base: ModelParams):
    """Free vector -> (ModelParams, initial StateVector); beta = p tied."""
    t = np.asarray(theta, dtype=float)
    if t.shape != (len(FREE_PARAMS),):
        raise DomainError(f"theta must have {len(FREE_PARAMS)} entries, got {t.shape}")
    alpha, beta, bVH, bHV, b, delta, mu_V, SH0, IH0, SV0, IV0 = t
    params = replace(base, alpha=alpha, beta=beta, p=beta, beta_VH=bVH,
                     beta_HV=bHV, b=b, delta=delta, mu_V=mu_V)
    RH0 = base.N_H - SH0 - IH0
    if RH0 < 0:
        raise DomainError("S_H0 + I_H0 exceeds N_H")
    init = StateVector(S_H=SH0, I_H=IH0, R_H=RH0, S_V=SV0, I_V=IV0)
    return params, init


def _model_incidence(theta, grid: GridSpec, base: ModelParams,
                     solve_cfg: StepSolveConfig) -> np.ndarray:
    params, init = build_model(theta, base)
    traj = simulate(params, init, grid, solve_cfg)
    return incidence_series(traj)


def sse(theta, data: ObservedSeries, grid: GridSpec, base: ModelParams,
        solve_cfg: StepSolveConfig = StepSolveConfig()) -> float:
    """Sum of squared weekly residuals; +inf (with a log record) if the run fails."""
    try:
        weekly = _model_incidence(theta, grid, base, solve_cfg)
    except (StepSolveError, DomainError) as exc:
        log.debug("objective failure at theta=%s: %s", np.asarray(theta), exc)
        return math.inf
    if data.week[-1] > len(weekly):
        raise DomainError(
            f"model horizon covers {len(weekly)} weeks but data extends to week {data.week[-1]}"
        )
    resid = data.cases - weekly[data.week - 1]
    return float(np.dot(resid, resid))


def lhs_sample(bounds: ParamBounds, n: int, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube draw: one point per stratum per dimension."""
    if n < 1:
        raise DomainError("need n >= 1 samples")
    d = len(bounds.lower)
    u = (rng.permuted(np.tile(np.arange(n), (d, 1)), axis=1).T + rng.uniform(size=(n, d))) / n
    return bounds.lower + u * bounds.width


def _refine_one(args):
    theta0, data, bounds, grid, base, maxfev = args
    cfg = StepSolveConfig()
    fun = lambda t: sse(t, data, grid, base, cfg)
    res = optimize.minimize(
        fun, theta0, method="Nelder-Mead",
        bounds=optimize.Bounds(bounds.lower, bounds.upper),
        options={"maxfev": maxfev, "xatol": 1e-8, "fatol": 1e-10, "adaptive": True},
    )
    return res.x, float(res.fun), bool(res.success)


def least_squares_fit(data: ObservedSeries, bounds: ParamBounds, grid: GridSpec,
                      base: ModelParams, n_starts: int = 100,
                      rng: Optional[np.random.Generator] = None,
                      maxfev: int = 2000, workers: int = 1) -> FitResult:
    """Bounded direct-search refinement of every LHS start; keep the minimum SSE."""
    if n_starts < 1:
        raise DomainError("need n_starts >= 1")
    rng = np.random.default_rng(rng)
    starts = lhs_sample(bounds, n_starts, rng)
    jobs = [(starts[k], data, bounds, grid, base, maxfev) for k in range(n_starts)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_refine_one, jobs))
    else:
        results = [_refine_one(j) for j in jobs]
    start_sse = np.array([r[1] for r in results])
    best = int(np.argmin(start_sse))
    if not np.isfinite(start_sse[best]):
        raise StepSolveError("every least-squares start failed to produce a finite objective")
    return FitResult(theta_hat=results[best][0], sse=start_sse[best],
                     n_starts=n_starts, converged=results[best][2],
                     start_sse=start_sse)


def geweke_z(chain, first: float = 0.1, last: float = 0.5) -> np.ndarray:
    """Per-parameter z-scores comparing the early and late chain segments.

    Variances are spectral-density-at-zero estimates: Bartlett-windowed
    autocovariances with a bandwidth adapted to the estimated
    autocorrelation time (sqrt-n lags for near-white chains, up to a
    quarter segment for slowly mixing ones; a fixed short window inflates
    |z| several-fold at AR(1) rho = 0.99, a fixed wide one wastes power on
    white noise).
    """
    x = np.asarray(chain, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    m = x.shape[0]
    if m < 100:
        raise DomainError(f"chain too short for a Geweke check ({m} < 100)")
    na = int(first * m)
    nb = int(last * m)
    if na < 2 or nb < 2:
        raise DomainError("segment fractions leave too few samples")
    a = x[:na]
    b = x[m - nb:]

    def s0(seg):
        seg = seg - seg.mean(axis=0)
        nseg = seg.shape[0]
        var = np.maximum((seg * seg).mean(axis=0), 1e-300)
        rho1 = np.clip((seg[1:] * seg[:-1]).sum(axis=0) / (nseg * var), 0.0, 0.999)
        tau = (1.0 + rho1) / (1.0 - rho1)
        out = var.copy()
        for j in range(seg.shape[1]):
            lags = int(np.clip(5.0 * tau[j], math.sqrt(nseg), nseg / 4.0))
            for k in range(1, lags + 1):
                cov = float((seg[k:, j] * seg[:-k, j]).sum()) / nseg
                out[j] += 2.0 * (1.0 - k / (lags + 1.0)) * cov
        return np.maximum(out, 1e-300)

    return (a.mean(axis=0) - b.mean(axis=0)) / np.sqrt(s0(a) / na + s0(b) / nb)


def gauss_newton_qcov(theta0, data: ObservedSeries, grid: GridSpec,
                      base: ModelParams, sigma2: float, bounds: ParamBounds,
                      rel_step: float = 1e-4, cap: float = 0.25) -> np.ndarray:
    """Proposal covariance sigma^2 (J^T J)^-1 from a finite-difference
    incidence Jacobian at theta0, built in bounds-scaled coordinates with
    each principal direction's standard deviation capped at ``cap`` box
    widths (flat likelihood directions become wide random-walk directions
    instead of unbounded ones)."""
    theta0 = np.asarray(theta0, dtype=float)
    d = len(theta0)
    w0 = _model_incidence(theta0, grid, base, StepSolveConfig())[data.week - 1]
    J = np.empty((len(w0), d))
    for j in range(d):
        step = rel_step * max(abs(theta0[j]), 1e-8 * bounds.width[j])
        tp = theta0.copy()
        tp[j] += step
        try:
            wp = _model_incidence(tp, grid, base, StepSolveConfig())[data.week - 1]
        except (StepSolveError, DomainError):
            tp[j] -= 2 * step
            wp = _model_incidence(tp, grid, base, StepSolveConfig())[data.week - 1]
            step = -step
        J[:, j] = (wp - w0) / step
    s = bounds.width
    Hs = (J * s[None, :]).T @ (J * s[None, :])
    vals, vecs = np.linalg.eigh(Hs)
    var = np.minimum(sigma2 / np.maximum(vals, 1e-300), cap ** 2)
    cov_s = (vecs * var) @ vecs.T
    return cov_s * np.outer(s, s)


def dram_mcmc(data: Optional[ObservedSeries], theta0, chain_len: int = 10_000,
              grid: Optional[GridSpec] = None, *,
              bounds: ParamBounds, base: Optional[ModelParams] = None,
              rng: Optional[np.random.Generator] = None,
              sigma2_0: Optional[float] = None, n0: float = 1.0,
              burn_frac: float = 0.2, adapt_every: int = 100,
              dr_scale: float = 0.2, fix_sigma: bool = False,
              qcov: Optional[np.ndarray] = None,
              adapt_scale: Optional[float] = None,
              adapt_from_start: bool = True,
              objective=None) -> PosteriorChain:
    """Delayed-rejection adaptive Metropolis on the Gaussian-likelihood posterior.

    log-likelihood -SSE/(2 sigma^2), flat prior on the bounds box, sigma^2
    refreshed by its conjugate inverse-gamma conditional each iteration
    (frozen when fix_sigma). The proposal covariance is re-estimated from the
    chain after the burn-in fraction, every ``adapt_every`` acceptances; a
    rejected first-stage move earns one retry from a dr_scale-shrunk proposal
    with the standard two-stage acceptance correction.

    ``objective`` (theta -> SSE-like value) replaces the model SSE when given;
    used by the analytic-target tests.
    """
    rng = np.random.default_rng(rng)
    theta0 = np.asarray(theta0, dtype=float)
    if not bounds.contains(theta0):
        raise DomainError("initial point is outside the bounds box")
    if chain_len < 2:
        raise DomainError("chain_len must be >= 2")
    if objective is None and (grid is None or base is None or data is None):
        raise DomainError("the model objective needs data, a grid and base parameters")
    fun = objective if objective is not None else (
        lambda t: sse(t, data, grid, base))
    d = len(theta0)
    n_obs = len(data.cases) if data is not None else max(d, 1)

    ss_cur = float(fun(theta0))
    if not math.isfinite(ss_cur):
        raise DomainError("objective is not finite at the initial point")
    if sigma2_0 is None:
        sigma2_0 = max(ss_cur / max(n_obs - d, 1), 1e-12)
    sigma2 = sigma2_0

    sd = adapt_scale if adapt_scale is not None else 2.38 ** 2 / d
    if qcov is None and objective is None:
        # ridge-aligned start: the posterior is strongly correlated and an
        # isotropic proposal stalls before adaptation can engage
        qcov = sd * gauss_newton_qcov(theta0, data, grid, base, sigma2_0, bounds)
    cov = qcov if qcov is not None else np.diag((bounds.width / 50.0) ** 2)

    def _chol(c):
        # relative per-coordinate jitter: the parameters span ~12 orders of
        # magnitude, so a scalar ridge would flood the small-scale coordinates
        jitter = np.diag(1e-8 * np.maximum(np.diag(c), (1e-12 * bounds.width) ** 2))
        return np.linalg.cholesky(c + jitter)

    chol = _chol(cov)

    samples = np.empty((chain_len, d))
    log_post = np.empty(chain_len)
    sig_trace = np.empty(chain_len)
    samples[0] = theta0
    log_post[0] = -0.5 * ss_cur / sigma2
    sig_trace[0] = sigma2
    theta = theta0.copy()
    accepted = 0
    last_adapt = 0
    burn = int(burn_frac * chain_len)

    def logpi(ss):
        return -0.5 * ss / sigma2

    def q1_logratio(y2, y1, x):
        # log N(y1; y2, cov) - log N(y1; x, cov) using the stage-1 kernel
        r2 = np.linalg.solve(chol, y1 - y2)
        r1 = np.linalg.solve(chol, y1 - x)
        return -0.5 * (np.dot(r2, r2) - np.dot(r1, r1))

    for k in range(1, chain_len):
        if not fix_sigma:
            # conjugate inverse-gamma draw for the observation variance
            shape = 0.5 * (n0 + n_obs)
            scale = 0.5 * (n0 * sigma2_0 + ss_cur)
            sigma2 = scale / rng.gamma(shape)
        y1 = theta + chol @ rng.standard_normal(d)
        ss1 = float(fun(y1)) if bounds.contains(y1) else math.inf
        a1 = min(1.0, math.exp(min(logpi(ss1) - logpi(ss_cur), 0.0))) \
            if math.isfinite(ss1) else 0.0
        if rng.uniform() < a1:
            theta, ss_cur = y1, ss1
            accepted += 1
        else:
            # delayed-rejection stage with a shrunk proposal
            y2 = theta + dr_scale * (chol @ rng.standard_normal(d))
            ss2 = float(fun(y2)) if bounds.contains(y2) else math.inf
            if math.isfinite(ss2):
                a1_rev = min(1.0, math.exp(min(logpi(ss1) - logpi(ss2), 0.0))) \
                    if math.isfinite(ss1) else 0.0
                if a1_rev < 1.0:
                    log_num = (logpi(ss2) + q1_logratio(y2, y1, theta)
                               + math.log1p(-a1_rev))
                    log_den = logpi(ss_cur) + math.log1p(-a1)
                    a2 = min(1.0, math.exp(min(log_num - log_den, 0.0)))
                    if rng.uniform() < a2:
                        theta, ss_cur = y2, ss2
                        accepted += 1
        samples[k] = theta
        log_post[k] = logpi(ss_cur)
        sig_trace[k] = sigma2
        if (adapt_from_start or k >= burn) and accepted - last_adapt >= adapt_every:
            cov_new = sd * np.atleast_2d(np.cov(samples[: k + 1].T))
            try:
                chol = _chol(cov_new)
                cov = cov_new
                last_adapt = accepted
            except np.linalg.LinAlgError:
                pass
    rate = accepted / (chain_len - 1)
    post = samples[burn:] if chain_len - burn >= 100 else samples
    z = geweke_z(post)
    return PosteriorChain(samples=samples, log_post=log_post,
                          acceptance_rate=float(rate), geweke=np.atleast_1d(z),
                          sigma2=sig_trace, names=bounds.names)


def synthetic_data(theta_true, grid: GridSpec, noise_sd: float, seed,
                   base: ModelParams) -> ObservedSeries:
    """Weekly incidence from the model plus additive Gaussian noise, floored at 0."""
    if noise_sd < 0:
        raise DomainError("noise_sd must be nonnegative")
    weekly = _model_incidence(np.asarray(theta_true, dtype=float), grid, base,
                              StepSolveConfig())
    rng = np.random.default_rng(seed)
    noisy = weekly + rng.normal(0.0, noise_sd, size=len(weekly)) if noise_sd > 0 else weekly
    return ObservedSeries(week=np.arange(1, len(weekly) + 1),
                          cases=np.clip(noisy, 0.0, None))


def posterior_summary(chain: PosteriorChain, burn_frac: float = 0.2) -> dict:
    """Mean and 2.5/97.5 percentiles per parameter, after burn-in."""
    start = int(burn_frac * len(chain.samples))
    post = chain.samples[start:]
    out = {}
    for j, name in enumerate(chain.names):
        lo, hi = np.percentile(post[:, j], [2.5, 97.5])
        out[name] = {"mean": float(post[:, j].mean()),
                     "ci2.5": float(lo), "ci97.5": float(hi)}
    out["acceptance_rate"] = chain.acceptance_rate
    out["geweke_z"] = {n: float(z) for n, z in zip(chain.names, chain.geweke)}
    return out
