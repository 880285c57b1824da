"""Command-line surface: exit codes, artifacts, determinism."""
import json

import numpy as np
import pytest

from fracdengue.cli import main
from fracdengue.model import ModelParams

BASE_PARAMS = dict(ModelParams.table4().__dict__)


def write_config(tmp_path, name="config.json", **blocks):
    cfg = {"params": BASE_PARAMS.copy(), "seed": 1}
    cfg.update(blocks)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path, cfg


def dfe_init():
    p = ModelParams.table4()
    return {"S_H": p.N_H, "I_H": 0.0, "R_H": 0.0,
            "S_V": p.Pi_V / p.mu_V, "I_V": 0.0}


def seeded_init(i_h=200.0, i_v=1000.0):
    p = ModelParams.table4()
    return {"S_H": p.N_H - i_h, "I_H": i_h, "R_H": 0.0,
            "S_V": p.Pi_V / p.mu_V - i_v, "I_V": i_v}


class TestExitCodes:
    def test_invalid_json_is_config_error(self, tmp_path):
        bad = tmp_path / "broken.json"
        bad.write_text("{not json")
        assert main(["simulate", "--config", str(bad)]) == 2

    def test_missing_config_is_io_error(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "absent.json")]) == 4

    def test_missing_block_is_config_error(self, tmp_path):
        path, _ = write_config(tmp_path, grid={"h": 0.5, "t_max": 7})
        # no init block
        assert main(["simulate", "--config", str(path),
                     "--out", str(tmp_path / "o")]) == 2

    def test_bad_field_diagnosed(self, tmp_path, capsys):
        cfg = {"params": {**BASE_PARAMS, "mu_V": -1.0},
               "grid": {"h": 0.5, "t_max": 7}, "init": dfe_init()}
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg))
        assert main(["simulate", "--config", str(path),
                     "--out", str(tmp_path / "o")]) == 2
        assert "mu_V" in capsys.readouterr().err

    def test_missing_data_file_is_io_error(self, tmp_path):
        path, _ = write_config(
            tmp_path, grid={"h": 1.0, "t_max": 364},
            calibration={"data": str(tmp_path / "missing.csv"), "n_starts": 1})
        assert main(["fit", "--config", str(path),
                     "--out", str(tmp_path / "o")]) == 4

    def test_numerical_failure_exit(self, tmp_path):
        # data extending beyond the model horizon trips the numeric path
        data = tmp_path / "cases.csv"
        data.write_text("week,cases\n" + "\n".join(f"{w},{5}" for w in range(1, 90)))
        path, _ = write_config(
            tmp_path, grid={"h": 1.0, "t_max": 364},
            calibration={"data": str(data), "n_starts": 1, "maxfev": 10})
        assert main(["fit", "--config", str(path),
                     "--out", str(tmp_path / "o")]) == 3


class TestSimulateCommand:
    def test_dfe_constant_csv_and_manifest(self, tmp_path):
        out = tmp_path / "out"
        path, _ = write_config(tmp_path, grid={"h": 0.5, "t_max": 14},
                               init=dfe_init())
        assert main(["simulate", "--config", str(path), "--out", str(out)]) == 0
        rows = (out / "trajectory.csv").read_text().splitlines()
        assert rows[0] == "t,S_H,I_H,R_H,S_V,I_V,flux"
        first = rows[1].split(",")
        last = rows[-1].split(",")
        assert first[1] == last[1]  # S_H constant
        summary = json.loads((out / "summary.json").read_text())
        assert summary["total_cases"] == 0.0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["stages"]["simulate"]["status"] == "ok"
        assert manifest["seed"] == 1


class TestAnalyzeCommand:
    def test_subcritical(self, tmp_path):
        out = tmp_path / "o"
        path, _ = write_config(tmp_path)
        assert main(["analyze", "--config", str(path), "--out", str(out)]) == 0
        res = json.loads((out / "analysis.json").read_text())
        assert res["r0"] == pytest.approx(0.8640212823423583, rel=1e-12)
        assert res["endemic"] is None
        assert res["routh"] is None

    def test_supercritical_routh(self, tmp_path):
        params = {**BASE_PARAMS, "beta_VH": 0.06}  # pushes r0 above 1
        cfg = {"params": params}
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg))
        out = tmp_path / "o"
        assert main(["analyze", "--config", str(path), "--out", str(out)]) == 0
        res = json.loads((out / "analysis.json").read_text())
        assert res["r0"] > 1
        assert res["endemic"] is not None
        routh = res["routh"]
        assert routh["stable"] is True
        assert all(routh[k] > 0 for k in ("A1", "B1", "C1", "A1B1_minus_C1"))
        assert all(re < 0 for re in routh["root_real_parts"])


class TestControlCommand:
    def test_s7_schedule_columns(self, tmp_path):
        out = tmp_path / "o"
        path, _ = write_config(
            tmp_path, grid={"h": 0.5, "t_max": 28}, init=seeded_init(),
            control={"strategies": ["S7"], "max_sweeps": 60})
        assert main(["control", "--config", str(path), "--out", str(out)]) == 0
        header = (out / "schedule_S7.csv").read_text().splitlines()[0]
        assert header == "t,psi,zeta,kappa"
        table = (out / "strategies.csv").read_text().splitlines()
        assert table[0].startswith("strategy,")
        assert [r.split(",")[0] for r in table[1:]] == ["baseline", "S7"]

    def test_unknown_strategy_rejected(self, tmp_path):
        path, _ = write_config(tmp_path, grid={"h": 0.5, "t_max": 14},
                               init=seeded_init(), control={"strategies": ["S9"]})
        assert main(["control", "--config", str(path),
                     "--out", str(tmp_path / "o")]) == 2


class TestFitAndMcmc:
    def make_data(self, tmp_path):
        # small synthetic series consistent with the configured grid
        from fracdengue.calibrate import synthetic_data
        from fracdengue.fracops import GridSpec
        base = ModelParams.table4()
        cap = 1.05 * base.N_H / 0.30
        theta = np.array([0.30, 0.90, 0.04, 0.90, 4.5, 1.05, 0.30,
                          0.995 * base.N_H, 4.0e-5 * base.N_H,
                          0.999 * cap, 2.0e-5 * cap])
        data = synthetic_data(theta, GridSpec(h=1.0, n_steps=364), 50.0, 3, base)
        path = tmp_path / "cases.csv"
        data.to_csv(path)
        return path, theta

    def test_fit_round_trip(self, tmp_path):
        data_path, theta = self.make_data(tmp_path)
        out = tmp_path / "o"
        path, _ = write_config(
            tmp_path, grid={"h": 1.0, "t_max": 364},
            calibration={"data": str(data_path), "n_starts": 2, "maxfev": 60})
        assert main(["fit", "--config", str(path), "--out", str(out)]) == 0
        fit = json.loads((out / "fit.json").read_text())
        assert fit["n_starts"] == 2 and fit["sse"] >= 0
        assert set(fit) > {"alpha", "beta", "b", "sse"}

    def test_mcmc_with_explicit_start(self, tmp_path):
        data_path, theta = self.make_data(tmp_path)
        out = tmp_path / "o"
        names = ["alpha", "beta", "beta_VH", "beta_HV", "b", "delta", "mu_V",
                 "S_H0", "I_H0", "S_V0", "I_V0"]
        path, _ = write_config(
            tmp_path, grid={"h": 1.0, "t_max": 364},
            calibration={"data": str(data_path), "chain_len": 300,
                         "theta0": dict(zip(names, map(float, theta)))})
        assert main(["mcmc", "--config", str(path), "--out", str(out)]) == 0
        chain_rows = (out / "chain.csv").read_text().splitlines()
        assert len(chain_rows) == 301
        geweke = json.loads((out / "geweke.json").read_text())
        assert "acceptance_rate" in geweke and "geweke_z" in geweke


class TestGsaCommand:
    def test_deterministic_given_seed(self, tmp_path):
        path, _ = write_config(tmp_path, grid={"h": 0.5, "t_max": 56},
                               init=seeded_init(),
                               sensitivity={"n": 40})
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["gsa", "--config", str(path), "--out", str(out1),
                     "--seed", "9"]) == 0
        assert main(["gsa", "--config", str(path), "--out", str(out2),
                     "--seed", "9"]) == 0
        assert (out1 / "prcc.csv").read_bytes() == (out2 / "prcc.csv").read_bytes()
        header = (out1 / "prcc.csv").read_text().splitlines()[0]
        assert header == "parameter,response,prcc,p_value,n_effective"
