"""Shared scenario builders for the test suite."""
import numpy as np

from fracdengue.model import ModelParams, endemic_equilibrium, r0
from fracdengue.solver import StateVector


def random_params(rng, r0_range=None, mu_H_range=(2e-3, 2e-2),
                  mu_V_range=(0.14, 1.0)):
    """Rejection-sample a valid parameter set, optionally conditioned on r0.

    mu_H defaults to a faster-than-literal range so that the Theorem-1 limit
    operators are saturated within the simulated horizons (see the decisions
    notes on mu_H * t).
    """
    for _ in range(20_000):
        beta = rng.uniform(0.1, 0.99)
        p = ModelParams(
            N_H=rng.uniform(1e4, 3e6),
            mu_H=rng.uniform(*mu_H_range),
            alpha=rng.uniform(0.1, 1.0),
            beta=beta,
            p=rng.uniform(beta, 1.0),
            beta_VH=rng.uniform(0.01, 0.6),
            beta_HV=rng.uniform(0.05, 0.99),
            b=rng.uniform(1.7, 7.0),
            mu_V=rng.uniform(*mu_V_range),
            C=rng.uniform(0.5, 2.0),
            delta=rng.uniform(1.0, 5.0),
        )
        if r0_range is None:
            return p
        if r0_range[0] <= r0(p) <= r0_range[1]:
            return p
    raise RuntimeError("rejection sampling failed")


def dfe_state(params) -> StateVector:
    cap = params.Pi_V / params.mu_V
    return StateVector(S_H=params.N_H, I_H=0.0, R_H=0.0, S_V=cap, I_V=0.0)


def endemic_state(params) -> StateVector:
    """Five-compartment state at the reduced endemic equilibrium."""
    rep = endemic_equilibrium(params)
    if rep is None:
        raise ValueError("parameters have r0 <= 1")
    S, I, V = rep.state
    return StateVector(S_H=S, I_H=I, R_H=params.N_H - S - I,
                       S_V=params.Pi_V / params.mu_V - V, I_V=V)


def perturbed_endemic_state(params, amp: float) -> StateVector:
    """Endemic equilibrium nudged by a relative amplitude, conservation kept."""
    eq = endemic_state(params)
    S = eq.S_H * (1 + amp)
    I = eq.I_H * (1 + amp)
    V = eq.I_V * (1 - amp)
    return StateVector(S_H=S, I_H=I, R_H=params.N_H - S - I,
                       S_V=eq.S_V + eq.I_V * amp, I_V=V)


def interior_state(params, rng) -> StateVector:
    """Random state inside the invariant region."""
    cap = params.Pi_V / params.mu_V
    f = rng.dirichlet([4.0, 1.0, 1.0])
    iv = rng.uniform(0.005, 0.3)
    return StateVector(S_H=f[0] * params.N_H, I_H=f[1] * params.N_H,
                       R_H=f[2] * params.N_H, S_V=(1 - iv) * cap, I_V=iv * cap)


def rel_err(sim, ref, floor):
    return np.abs(sim - ref) / np.maximum(np.abs(ref), floor)
