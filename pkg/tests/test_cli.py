import json

import numpy as np
import pytest

from deepc import NoiseSpec, RobustnessReport, TrajectoryData, converter_surrogate, generate_excitation, simulate
from deepc.cli import main

FAST_SCENARIO = {
    "params": {"data_length": 120},
    "schedule": {
        "collect_start": 10,
        "collect_end": 130,
        "activate": 150,
        "ref_step_at": 170,
        "run_end": 240,
    },
    "noise": {"input_dither_power": 0.01},
}


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def run(tmp_path, command, payload, out="out", extra=()):
    cfg = write_config(tmp_path, payload)
    out_dir = tmp_path / out
    code = main([command, "--config", cfg, "--out", str(out_dir), *extra])
    return code, out_dir


class TestSimulate:
    def test_zero_input_decays(self, tmp_path):
        payload = {"simulate": {"steps": 80, "x0": [1.0, -1.0, 0.5, 0.0, 0.2, 0.1], "u": "zeros"}}
        code, out = run(tmp_path, "simulate", payload)
        assert code == 0
        data = TrajectoryData.from_csv(out / "trajectory.csv")
        early = np.abs(data.y[:10]).max()
        late = np.abs(data.y[-10:]).max()
        assert late < 1e-2 * early

    def test_matches_library_call_byte_for_byte(self, tmp_path):
        payload = {"seed": 11, "simulate": {"steps": 60, "u": "dither",
                                            "noise": {"input_dither_power": 0.01,
                                                      "output_noise_power": 1e-6}}}
        code, out = run(tmp_path, "simulate", payload)
        assert code == 0
        plant = converter_surrogate()
        spec = NoiseSpec(seed=11, input_dither_power=0.01, output_noise_power=1e-6)
        u = generate_excitation(spec, plant.m, 60)
        y, _ = simulate(plant, np.zeros(plant.n), u, noise=spec)
        golden = tmp_path / "golden.csv"
        TrajectoryData(u=u, y=y).to_csv(golden)
        assert (out / "trajectory.csv").read_bytes() == golden.read_bytes()

    def test_seeded_rerun_identical(self, tmp_path):
        payload = {"seed": 3, "simulate": {"steps": 50, "u": "dither",
                                           "noise": {"input_dither_power": 0.01}}}
        _, out1 = run(tmp_path, "simulate", payload, out="a")
        _, out2 = run(tmp_path, "simulate", payload, out="b")
        assert (out1 / "trajectory.csv").read_bytes() == (out2 / "trajectory.csv").read_bytes()


class TestCollect:
    def test_default_collection_passes_rank(self, tmp_path):
        payload = {"seed": 0, "collect": {"data_length": 200,
                                          "noise": {"input_dither_power": 0.01}}}
        code, out = run(tmp_path, "collect", payload)
        assert code == 0
        report = dict(
            line.split(" ", 1) for line in (out / "rank_report.txt").read_text().splitlines()
        )
        assert report["pass"] == "1"
        assert int(report["rank"]) == int(report["target"]) == 3 * 18 + 6

    def test_zero_excitation_fails_rank_report(self, tmp_path):
        payload = {"collect": {"data_length": 200, "excitation_base": 0.0,
                               "noise": {"input_dither_power": 0.0}}}
        code, out = run(tmp_path, "collect", payload)
        assert code == 1
        report = dict(
            line.split(" ", 1) for line in (out / "rank_report.txt").read_text().splitlines()
        )
        assert report["pass"] == "0"
        assert report["rank"] == "0"

    def test_deterministic(self, tmp_path):
        payload = {"seed": 7, "collect": {"data_length": 150,
                                          "noise": {"input_dither_power": 0.01}}}
        _, a = run(tmp_path, "collect", payload, out="a")
        _, b = run(tmp_path, "collect", payload, out="b")
        assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()


class TestControl:
    def test_produces_log_and_metrics(self, tmp_path):
        payload = {"seed": 0, "control": FAST_SCENARIO}
        code, out = run(tmp_path, "control", payload, extra=["--emit-plot-data"])
        assert code == 0
        assert (out / "closed_loop.csv").exists()
        assert (out / "collected_data.csv").exists()
        assert (out / "plot_active_power.csv").exists()
        metrics = dict(
            line.split(" ", 1) for line in (out / "metrics.txt").read_text().splitlines()
        )
        assert float(metrics["steady_state_error.P_E"]) < 1e-3

    def test_missing_section_names_key(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"seed": 0})
        code = main(["control", "--config", cfg, "--out", str(tmp_path / "o")])
        assert code == 2
        assert "missing config key 'control'" in capsys.readouterr().err

    def test_solver_override_matches_default(self, tmp_path):
        payload = {"seed": 0, "control": FAST_SCENARIO}
        _, out_cf = run(tmp_path, "control", payload, out="cf")  # closed_form default
        _, out_qp = run(tmp_path, "control", payload, out="qp", extra=["--solver", "qp"])
        cf = np.genfromtxt(out_cf / "closed_loop.csv", delimiter=",", skip_header=1,
                           usecols=(1, 2, 3))
        qp = np.genfromtxt(out_qp / "closed_loop.csv", delimiter=",", skip_header=1,
                           usecols=(1, 2, 3))
        assert np.abs(cf - qp).max() < 1e-6

    def test_plant_from_model_file(self, tmp_path):
        model_path = tmp_path / "model.txt"
        converter_surrogate().to_text(model_path)
        by_file = dict(FAST_SCENARIO, plant={"file": str(model_path)})
        _, out_file = run(tmp_path, "control", {"seed": 0, "control": by_file}, out="f")
        _, out_builtin = run(tmp_path, "control", {"seed": 0, "control": FAST_SCENARIO}, out="s")
        assert (out_file / "closed_loop.csv").read_bytes() == (
            out_builtin / "closed_loop.csv"
        ).read_bytes()

    def test_byte_identical_reruns(self, tmp_path):
        payload = {"seed": 5, "control": dict(FAST_SCENARIO,
                                              noise={"input_dither_power": 0.01,
                                                     "output_noise_power": 1e-7})}
        _, a = run(tmp_path, "control", payload, out="a", extra=["--emit-plot-data"])
        _, b = run(tmp_path, "control", payload, out="b", extra=["--emit-plot-data"])
        for name in ("closed_loop.csv", "collected_data.csv", "plot_active_power.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestSweep:
    payload = {
        "seed": 1,
        "sweep": dict(FAST_SCENARIO, lambda_grid=[10.0, 1000.0, 10000.0]),
    }

    def test_grid_rows_written(self, tmp_path):
        code, out = run(tmp_path, "sweep", self.payload)
        assert code == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0].startswith("lambda_g,")
        assert len(lines) == 4

    def test_rise_time_column_monotone(self, tmp_path):
        _, out = run(tmp_path, "sweep", self.payload)
        rise = np.genfromtxt(out / "sweep.csv", delimiter=",", skip_header=1, usecols=(4,))
        assert all(b > a for a, b in zip(rise, rise[1:]))

    def test_deterministic(self, tmp_path):
        _, a = run(tmp_path, "sweep", self.payload, out="a")
        _, b = run(tmp_path, "sweep", self.payload, out="b")
        assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()

    def test_missing_grid_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"sweep": dict(FAST_SCENARIO)})
        code = main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")])
        assert code == 2
        assert "lambda_grid" in capsys.readouterr().err


class TestVerify:
    payload = {"seed": 100, "verify": {"instances": 2, "h_size": 12,
                                       "lambda_grid": [1.0, 10.0]}}

    def test_small_batch_passes(self, tmp_path):
        code, out = run(tmp_path, "verify", self.payload)
        assert code == 0
        summary = (out / "summary.txt").read_text()
        assert summary.strip().endswith("checks")
        assert "FAIL" not in summary

    def test_injected_false_radius_fails(self, tmp_path):
        payload = {"seed": 100, "verify": {"instances": 1, "h_size": 12,
                                           "lambda_grid": [1.0],
                                           "mutate_radius": 1.5}}
        code, out = run(tmp_path, "verify", payload)
        assert code == 1
        assert "FAIL" in (out / "summary.txt").read_text()

    def test_report_files_parse_losslessly(self, tmp_path):
        _, out = run(tmp_path, "verify", self.payload)
        reports = sorted(out.glob("report_*.txt"))
        assert reports
        for path in reports:
            report = RobustnessReport.from_text(path)
            relayed = out / ("again_" + path.name)
            report.to_text(relayed)
            assert relayed.read_bytes() == path.read_bytes()

    def test_instances_and_solutions_emitted(self, tmp_path):
        from deepc.solver import problem_from_text

        _, out = run(tmp_path, "verify", self.payload)
        instances = sorted(out.glob("instance_*.txt"))
        assert len(instances) == 2
        prob = problem_from_text(instances[0])
        assert prob.A_mat.shape[1] == 12
        assert len(list(out.glob("solution_*.txt"))) == 4


class TestParser:
    def test_unknown_command_rejected(self):
        with pytest.raises(SystemExit):
            main(["frobnicate", "--config", "x"])

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["simulate", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path)])
        assert code == 2
        assert "not found" in capsys.readouterr().err

    def test_missing_referenced_model_file(self, tmp_path, capsys):
        payload = {"simulate": {"plant": {"file": str(tmp_path / "ghost.txt")},
                                "steps": 5}}
        cfg = write_config(tmp_path, payload)
        code = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
        assert code == 2
        assert "ghost.txt" in capsys.readouterr().err
