"""Scalar special functions behind the discretization weights and kernels.

Lower incomplete gamma, two-parameter Mittag-Leffler, and the power-law
recovery kernels built from them. All functions validate their domain and
either return a finite float or raise; NaN is never propagated silently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import special

from .errors import ConvergenceError, DomainError

__all__ = [
    "EvalPolicy",
    "DEFAULT_POLICY",
    "lower_incomplete_gamma",
    "regularized_lower_gamma",
    "mittag_leffler",
    "recovery_survival",
    "recovery_density",
    "tempered_kernel_integral",
]


@dataclass(frozen=True)
class EvalPolicy:
    """Tolerances for the series evaluations.

    ``series_asymptotic_switch`` is the threshold on |z|**(1/r) above which
    the Mittag-Leffler power series is abandoned for the algebraic
    asymptotic expansion. Series terms peak near exp(|z|**(1/r)), so
    cancellation costs ~1e-16 exp(u) absolute while the truncated expansion
    costs ~exp(-u); the default switch sits at the crossover (absolute
    error <= ~1e-8 either side of the seam).
    """

    rel_tol: float = 1e-12
    max_terms: int = 10_000
    series_asymptotic_switch: float = 18.0

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError("rel_tol must be positive")
        if self.max_terms < 1:
            raise DomainError("max_terms must be >= 1")
        if not self.series_asymptotic_switch > 0:
            raise DomainError("series_asymptotic_switch must be positive")


DEFAULT_POLICY = EvalPolicy()


def lower_incomplete_gamma(t: float, y: float) -> float:
    """gamma(t, y) = integral_0^t u^(y-1) e^(-u) du, unregularized."""
    t = float(t)
    y = float(y)
    if y <= 0:
        raise DomainError(f"shape must be positive, got y={y}")
    if t < 0:
        raise DomainError(f"upper limit must be nonnegative, got t={t}")
    return float(special.gammainc(y, t)) * math.exp(math.lgamma(y))


def regularized_lower_gamma(t: float, y: float) -> float:
    """gamma(t, y) / Gamma(y), in [0, 1]."""
    t = float(t)
    y = float(y)
    if y <= 0:
        raise DomainError(f"shape must be positive, got y={y}")
    if t < 0:
        raise DomainError(f"upper limit must be nonnegative, got t={t}")
    return float(special.gammainc(y, t))


def _ml_series(r: float, l: float, z: float, policy: EvalPolicy) -> float:
    total = 0.0
    term = 1.0 / math.gamma(l)
    k = 0
    logaz = math.log(abs(z)) if z != 0.0 else -math.inf
    # index past which terms are guaranteed to decay
    k_peak = (abs(z) ** (1.0 / r) - l) / r if z != 0.0 else 0.0
    while k < policy.max_terms:
        total += term
        k += 1
        log_term = k * logaz - math.lgamma(r * k + l)
        sign = 1.0 if z > 0 or k % 2 == 0 else -1.0
        term = sign * math.exp(log_term)
        if k > k_peak and abs(term) <= policy.rel_tol * max(abs(total), 1e-300):
            return total
    raise ConvergenceError(
        f"Mittag-Leffler series for E_{{{r},{l}}}({z}) did not converge "
        f"within {policy.max_terms} terms"
    )


def _ml_algebraic_tail(r: float, l: float, z: float, policy: EvalPolicy):
    """Sum of -z^(-k)/Gamma(l - r k), truncated near its smallest term.

    Returns (sum, error_estimate). Term magnitudes oscillate through the
    reflection sine factor, so stopping decisions use the smooth envelope
    Gamma(r k + 1 - l)/(pi |z|^k) instead of the raw terms; the envelope
    bottoms out around k ~ |z|^(1/r)/r, which bounds the truncation error.
    """
    total = 0.0
    ax = abs(z)
    lax = math.log(ax)
    k_opt = max(3, int(ax ** (1.0 / r) / r) + 2)
    best = math.inf
    for k in range(1, min(policy.max_terms, 4 * k_opt)):
        arg = r * k + 1.0 - l
        rg = float(special.rgamma(l - r * k))  # 1/Gamma, zero at poles
        term = -rg * z ** (-k)
        if arg > 0.5:
            env = math.exp(math.lgamma(arg) - k * lax) / math.pi
        else:
            env = abs(term)
        if k > k_opt and env > best:
            break
        total += term
        best = min(best, env)
        if abs(total) > 0 and env <= policy.rel_tol * abs(total):
            break
    return total, best


def mittag_leffler(r: float, l: float, z: float, policy: EvalPolicy = DEFAULT_POLICY) -> float:
    """Two-parameter Mittag-Leffler E_{r,l}(z) = sum_k z^k / Gamma(r k + l).

    Real arguments only. Power series below the switch threshold; the
    algebraic asymptotic expansion beyond it (plus the exponential term for
    large positive z). Near the switchover the achievable relative accuracy
    is ~ exp(-|z|**(1/r)), i.e. ~1e-7 at the default threshold.
    """
    r = float(r)
    l = float(l)
    z = float(z)
    if r <= 0 or l <= 0:
        raise DomainError(f"orders must be positive, got r={r}, l={l}")
    if z == 0.0:
        return 1.0 / math.gamma(l)
    if r == 1.0 and l == 1.0:
        return math.exp(z)
    if abs(z) ** (1.0 / r) <= policy.series_asymptotic_switch:
        return _ml_series(r, l, z, policy)
    tail, err = _ml_algebraic_tail(r, l, z, policy)
    if z > 0:
        # exponential asymptotics on the positive axis (0 < r < 2)
        if r >= 2.0:
            raise ConvergenceError(
                f"asymptotic evaluation not supported for r={r} >= 2 with large z"
            )
        zr = z ** (1.0 / r)
        tail += (1.0 / r) * zr ** (1.0 - l) * math.exp(zr)
    if abs(tail) > 0 and err > 1e-5 * abs(tail):
        raise ConvergenceError(
            f"asymptotic expansion for E_{{{r},{l}}}({z}) stalled at relative "
            f"error {err / abs(tail):.2e}"
        )
    if not math.isfinite(tail):
        raise ConvergenceError(f"E_{{{r},{l}}}({z}) overflowed")
    return tail


def recovery_survival(t: float, beta: float, C: float,
                      policy: EvalPolicy = DEFAULT_POLICY) -> float:
    """Probability of not yet having recovered by time t: E_{beta,1}(-(t/C)^beta)."""
    t = float(t)
    beta = float(beta)
    C = float(C)
    if t < 0:
        raise DomainError(f"time must be nonnegative, got t={t}")
    if not 0 < beta <= 1:
        raise DomainError(f"recovery order must be in (0, 1], got beta={beta}")
    if C <= 0:
        raise DomainError(f"scale must be positive, got C={C}")
    if beta == 1.0:
        return math.exp(-t / C)
    if t == 0.0:
        return 1.0
    return mittag_leffler(beta, 1.0, -((t / C) ** beta), policy)


def recovery_density(t: float, beta: float, C: float,
                     policy: EvalPolicy = DEFAULT_POLICY) -> float:
    """Recovery-time density (t^(beta-1)/C^beta) E_{beta,beta}(-(t/C)^beta).

    Power-law tail ~ t^(-1-beta) for beta < 1.
    """
    t = float(t)
    beta = float(beta)
    C = float(C)
    if t <= 0:
        raise DomainError(f"time must be positive, got t={t}")
    if not 0 < beta <= 1:
        raise DomainError(f"recovery order must be in (0, 1], got beta={beta}")
    if C <= 0:
        raise DomainError(f"scale must be positive, got C={C}")
    if beta == 1.0:
        return math.exp(-t / C) / C
    ml = mittag_leffler(beta, beta, -((t / C) ** beta), policy)
    return t ** (beta - 1.0) / C ** beta * ml


def tempered_kernel_integral(tau1: float, tau2: float, y: float, l: float) -> float:
    """integral_{tau2}^{tau1} u^(y-1) e^(-l u) du via incomplete-gamma differences.

    ``tau1`` and ``tau2`` are the kernel lags t - t1 >= t - t2 >= 0; the value
    equals (gamma(l tau1, y) - gamma(l tau2, y)) / l^y.
    """
    tau1 = float(tau1)
    tau2 = float(tau2)
    y = float(y)
    l = float(l)
    if y <= 0 or l <= 0:
        raise DomainError(f"need y > 0 and l > 0, got y={y}, l={l}")
    if tau2 < 0 or tau1 < tau2:
        raise DomainError(f"need tau1 >= tau2 >= 0, got tau1={tau1}, tau2={tau2}")
    if tau1 == tau2:
        return 0.0
    scale = math.exp(math.lgamma(y))
    p1 = float(special.gammainc(y, l * tau1))
    p2 = float(special.gammainc(y, l * tau2))
    return (p1 - p2) * scale / l ** y
