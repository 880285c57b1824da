"""Batch command-line surface.

Subcommands: simulate | analyze | control | fit | mcmc | gsa. Every run reads
one JSON config, writes its artifacts plus a manifest.json into the output
directory, and is deterministic given (config, seed) up to manifest
timestamps.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .calibrate import (
    FREE_PARAMS,
    ObservedSeries,
    ParamBounds,
    dram_mcmc,
    least_squares_fit,
    posterior_summary,
)
from .errors import ConfigError, ConvergenceError, DomainError
from .fracops import GridSpec
from .model import ModelParams, disease_free_equilibrium, endemic_equilibrium, r0
from .optctl import STRATEGIES, CostWeights, SweepConfig, run_strategy, strategy_table
from .sensitivity import GSA_PARAMS, GsaBounds, run_gsa
from .solver import StateVector, StepSolveConfig, incidence_series, simulate

log = logging.getLogger(__name__)


def _require(cfg: dict, key: str, kind=dict):
    if key not in cfg:
        raise ConfigError(f"config is missing the '{key}' block")
    if not isinstance(cfg[key], kind):
        raise ConfigError(f"config field '{key}' must be a {kind.__name__}")
    return cfg[key]


def _params_from(cfg: dict) -> ModelParams:
    block = _require(cfg, "params")
    known = {"N_H", "mu_H", "alpha", "beta", "p", "beta_VH", "beta_HV",
             "b", "mu_V", "C", "delta"}
    extra = set(block) - known
    if extra:
        raise ConfigError(f"unknown entries in 'params': {sorted(extra)}")
    try:
        return ModelParams.table4(**block)
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"invalid 'params' block: {exc}") from exc


def _grid_from(cfg: dict) -> GridSpec:
    block = _require(cfg, "grid")
    try:
        h = float(block["h"])
        t_max = float(block["t_max"])
        theta = float(block.get("theta", 0.0))
        n = int(round(t_max / h))
        if abs(n * h - t_max) > 1e-9 * max(t_max, 1.0):
            raise ConfigError(f"t_max={t_max} is not a multiple of h={h}")
        return GridSpec(h=h, n_steps=n, theta=theta)
    except KeyError as exc:
        raise ConfigError(f"'grid' block needs h and t_max (missing {exc})") from exc
    except DomainError as exc:
        raise ConfigError(f"invalid 'grid' block: {exc}") from exc


def _init_from(cfg: dict, params: ModelParams) -> StateVector:
    block = _require(cfg, "init")
    try:
        init = StateVector(**{k: float(block[k]) for k in
                              ("S_H", "I_H", "R_H", "S_V", "I_V")})
    except KeyError as exc:
        raise ConfigError(f"'init' block is missing compartment {exc}") from exc
    try:
        init.validate_region(params)
    except DomainError as exc:
        raise ConfigError(f"initial state outside the invariant region: {exc}") from exc
    return init


def _bounds_from(block: dict, base: ModelParams) -> ParamBounds:
    bounds = ParamBounds.default(base)
    if not block:
        return bounds
    lo = bounds.lower.copy()
    hi = bounds.upper.copy()
    for name, pair in block.items():
        if name not in FREE_PARAMS:
            raise ConfigError(f"unknown free parameter '{name}' in bounds "
                              f"(expected one of {FREE_PARAMS})")
        j = FREE_PARAMS.index(name)
        lo[j], hi[j] = float(pair[0]), float(pair[1])
    try:
        return ParamBounds(lower=lo, upper=hi)
    except DomainError as exc:
        raise ConfigError(f"invalid bounds: {exc}") from exc


class Manifest:
    def __init__(self, cfg: dict, seed, out_dir: Path):
        self.data = {
            "tool": "fracdengue",
            "version": __version__,
            "config_sha256": hashlib.sha256(
                json.dumps(cfg, sort_keys=True).encode()).hexdigest(),
            "seed": seed,
            "started_unix": time.time(),
            "stages": {},
        }
        self.out_dir = out_dir

    def stage(self, name: str, status: str, seconds: float, **extra):
        self.data["stages"][name] = {"status": status,
                                     "wall_clock_s": round(seconds, 3), **extra}

    def write(self):
        self.data["finished_unix"] = time.time()
        with open(self.out_dir / "manifest.json", "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)


def _dump_json(obj, path: Path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)


def cmd_simulate(cfg, out, seed, workers):
    params = _params_from(cfg)
    grid = _grid_from(cfg)
    init = _init_from(cfg, params)
    traj = simulate(params, init, grid, StepSolveConfig())
    traj.export_csv(out / "trajectory.csv")
    weekly = incidence_series(traj) if grid.t_max >= 7.0 else np.array([])
    summary = {
        "r0": r0(params),
        "final_state": dict(zip(("S_H", "I_H", "R_H", "S_V", "I_V"),
                                map(float, traj.states[-1]))),
        "total_cases": float(grid.h * np.clip(traj.infection_flux, 0, None).sum()),
        "weekly_cases": [float(v) for v in weekly],
        "n_clipped": traj.n_clipped,
    }
    _dump_json(summary, out / "summary.json")
    return {"steps": grid.n_steps}


def cmd_analyze(cfg, out, seed, workers):
    params = _params_from(cfg)
    dfe = disease_free_equilibrium(params)
    endemic = endemic_equilibrium(params)
    result = {
        "r0": dfe.r0,
        "dfe": {"state": list(dfe.state), "residual": dfe.residual},
        "endemic": None,
        "routh": None,
    }
    if endemic is not None:
        result["endemic"] = {"state": list(endemic.state), "residual": endemic.residual}
        routh = endemic.routh
        result["routh"] = {
            "A1": routh.A1, "B1": routh.B1, "C1": routh.C1,
            "A1B1_minus_C1": routh.discriminant, "stable": routh.stable,
            "root_real_parts": sorted(float(z.real) for z in routh.roots()),
        }
    _dump_json(result, out / "analysis.json")
    return {"r0": dfe.r0}


def cmd_control(cfg, out, seed, workers):
    params = _params_from(cfg)
    grid = _grid_from(cfg)
    init = _init_from(cfg, params)
    block = cfg.get("control", {})
    names = block.get("strategies", sorted(STRATEGIES))
    bad = [s for s in names if s not in STRATEGIES]
    if bad:
        raise ConfigError(f"unknown strategies {bad}; expected S1..S7")
    try:
        weights = CostWeights(**{k: float(v) for k, v in block.get("weights", {}).items()},
                              c_m=float(block.get("c_m", 0.5)))
        sweep_cfg = SweepConfig(
            relaxation=float(block.get("relaxation", 0.5)),
            conv_tol=float(block.get("conv_tol", 1e-4)),
            max_sweeps=int(block.get("max_sweeps", 200)),
        )
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"invalid 'control' block: {exc}") from exc
    reports = [run_strategy("baseline", params, init, grid, weights, sweep_cfg)]
    for name in names:
        rep = run_strategy(name, params, init, grid, weights, sweep_cfg)
        rep.schedule.export_csv(out / f"schedule_{name}.csv", grid)
        reports.append(rep)
    strategy_table(reports, out / "strategies.csv")
    return {"strategies": list(names)}


def _data_path(block: dict) -> str:
    path = block.get("data")
    if not isinstance(path, str):
        raise ConfigError("'calibration' block needs a 'data' CSV path")
    return path


def cmd_fit(cfg, out, seed, workers):
    params = _params_from(cfg)
    grid = _grid_from(cfg)
    block = _require(cfg, "calibration")
    data = ObservedSeries.from_csv(_data_path(block))
    bounds = _bounds_from(block.get("bounds", {}), params)
    n_starts = int(block.get("n_starts", 100))
    rng = np.random.default_rng(seed)
    fit = least_squares_fit(data, bounds, grid, params, n_starts=n_starts,
                            rng=rng, maxfev=int(block.get("maxfev", 2000)),
                            workers=workers)
    _dump_json(fit.as_dict(), out / "fit.json")
    return {"sse": fit.sse, "n_starts": n_starts}


def cmd_mcmc(cfg, out, seed, workers):
    params = _params_from(cfg)
    grid = _grid_from(cfg)
    block = _require(cfg, "calibration")
    data = ObservedSeries.from_csv(_data_path(block))
    bounds = _bounds_from(block.get("bounds", {}), params)
    chain_len = int(block.get("chain_len", 10_000))
    rng = np.random.default_rng(seed)
    if "theta0" in block:
        theta0 = np.array([float(block["theta0"][n]) for n in FREE_PARAMS])
    else:
        fit = least_squares_fit(data, bounds, grid, params,
                                n_starts=int(block.get("n_starts", 100)),
                                rng=rng, maxfev=int(block.get("maxfev", 2000)),
                                workers=workers)
        theta0 = fit.theta_hat
    chain = dram_mcmc(data, theta0, chain_len, grid, bounds=bounds, base=params,
                      rng=rng)
    chain.export_csv(out / "chain.csv")
    _dump_json(posterior_summary(chain), out / "geweke.json")
    return {"acceptance_rate": chain.acceptance_rate, "chain_len": chain_len}


def cmd_gsa(cfg, out, seed, workers):
    params = _params_from(cfg)
    block = cfg.get("sensitivity", {})
    n = int(block.get("n", 1000))
    bounds = GsaBounds.default()
    if "bounds" in block:
        lo = bounds.lower.copy()
        hi = bounds.upper.copy()
        for name, pair in block["bounds"].items():
            if name not in GSA_PARAMS:
                raise ConfigError(f"unknown GSA parameter '{name}'")
            j = GSA_PARAMS.index(name)
            lo[j], hi[j] = float(pair[0]), float(pair[1])
        bounds = GsaBounds(lower=lo, upper=hi)
    grid = _grid_from(cfg) if "grid" in cfg else None
    init = _init_from(cfg, params) if "init" in cfg else None
    report = run_gsa(bounds=bounds, n=n, seed=seed, grid=grid, init=init,
                     base=params, workers=workers)
    report.export_csv(out / "prcc.csv")
    return {"n": n, "n_failed": report.n_failed}


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "control": cmd_control,
    "fit": cmd_fit,
    "mcmc": cmd_mcmc,
    "gsa": cmd_gsa,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fracdengue",
        description="Tempered fractional-order vector-borne disease toolkit",
    )
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default=None, help="output directory (overrides config)")
    ap.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 4
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON (line {exc.lineno}): {exc.msg}",
              file=sys.stderr)
        return 2
    if not isinstance(cfg, dict):
        print("error: config root must be a JSON object", file=sys.stderr)
        return 2

    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out_dir = Path(args.out or cfg.get("output_dir", "."))
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return 4

    manifest = Manifest(cfg, seed, out_dir)
    t0 = time.time()
    try:
        extra = COMMANDS[args.command](cfg, out_dir, seed, max(1, args.workers))
        manifest.stage(args.command, "ok", time.time() - t0, **(extra or {}))
        manifest.write()
        return 0
    except ConfigError as exc:
        manifest.stage(args.command, "config-error", time.time() - t0, error=str(exc))
        manifest.write()
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, DomainError, FloatingPointError) as exc:
        manifest.stage(args.command, "numerical-failure", time.time() - t0, error=str(exc))
        manifest.write()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
