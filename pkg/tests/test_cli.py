import json

import numpy as np
import pytest

from morinv import TimeGrid, impulse_input, simulate, project_system
from morinv import serialize
from morinv.bench import make_problem
from morinv.cli import main
from morinv.optimize import MEMORY_BUDGET_ENV


def make_data_csv(path, model="generic", size=9, seed=0, theta=None, magnitude=10.0):
    problem = make_problem("generic" if model == "generic" else "fmri", size, seed)
    grid = TimeGrid(0.0, 0.01, 1.0)
    u = impulse_input(grid, problem.system.J, magnitude)
    theta = problem.theta_true if theta is None else theta
    traj = simulate(problem.system, theta, u, grid)
    serialize.write_outputs_csv(traj.times, traj.outputs, path)
    return problem, grid, traj


class TestReduceCommand:
    def test_trust_data_only_column_count(self, tmp_path):
        data_csv = tmp_path / "y.csv"
        make_data_csv(data_csv)
        out = tmp_path / "out"
        code = main([
            "reduce", "--model", "generic", "--size", "9",
            "--method", "trust_data_only", "--iters", "3",
            "--data", str(data_csv), "--impulse-magnitude", "10",
            "--seed", "0", "--out", str(out),
        ])
        assert code == 0
        pair = serialize.load_projection_pair(out / "projection.dat")
        assert pair.P.shape == (81, 4)
        assert (out / "trace.csv").exists()
        assert (out / "V.csv").exists() and (out / "P.csv").exists()

    def test_zero_iterations_gives_initial_bases(self, tmp_path):
        out = tmp_path / "out"
        code = main([
            "reduce", "--model", "generic", "--size", "9", "--method", "original",
            "--iters", "0", "--seed", "1", "--out", str(out),
        ])
        assert code == 0
        pair = serialize.load_projection_pair(out / "projection.dat")
        assert pair.P.shape[1] == 1

    def test_repeated_runs_are_byte_identical(self, tmp_path):
        data_csv = tmp_path / "y.csv"
        make_data_csv(data_csv)
        payloads = []
        for name in ("a", "b"):
            out = tmp_path / name
            main([
                "reduce", "--model", "generic", "--size", "9",
                "--method", "trust_data_only", "--iters", "2",
                "--data", str(data_csv), "--seed", "7", "--out", str(out),
            ])
            payloads.append((out / "projection.dat").read_bytes())
        assert payloads[0] == payloads[1]

    def test_data_only_without_data_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main([
                "reduce", "--model", "generic", "--size", "9",
                "--method", "data_only", "--iters", "2", "--out", str(tmp_path),
            ])
        assert exc.value.code == 2


class TestInvertCommand:
    def test_reduced_self_consistency(self, tmp_path):
        data_csv = tmp_path / "y.csv"
        make_data_csv(data_csv)
        out = tmp_path / "red"
        main([
            "reduce", "--model", "generic", "--size", "9",
            "--method", "trust_data_only", "--iters", "3",
            "--data", str(data_csv), "--impulse-magnitude", "10",
            "--seed", "0", "--out", str(out),
        ])
        # synthesize data from the reduced model itself (at a prior-plausible
        # parameter point), then invert it
        problem = make_problem("generic", 9, 0)
        pair = serialize.load_projection_pair(out / "projection.dat")
        reduced = project_system(problem.system, pair.V, pair.P)
        grid = TimeGrid(0.0, 0.01, 1.0)
        u = impulse_input(grid, 3, 10.0)
        rng = np.random.default_rng(5)
        theta_r = reduced.restrict_params(-np.eye(9).reshape(-1)) + 0.05 * rng.normal(size=pair.P.shape[1])
        traj = simulate(reduced.system, theta_r, u, grid)
        red_csv = tmp_path / "y_red.csv"
        serialize.write_outputs_csv(traj.times, traj.outputs, red_csv)
        result_path = tmp_path / "inv.json"
        code = main([
            "invert", "--model", "generic", "--size", "9", "--seed", "0",
            "--proj", str(out / "projection.dat"), "--data", str(red_csv),
            "--impulse-magnitude", "10", "--out", str(result_path),
        ])
        assert code == 0
        payload = json.loads(result_path.read_text())
        assert payload["rel_err"] <= 1e-3
        assert len(payload["theta_map"]) == 81

    def test_full_order_small_completes(self, tmp_path):
        data_csv = tmp_path / "y.csv"
        make_data_csv(data_csv)
        result_path = tmp_path / "inv.json"
        code = main([
            "invert", "--model", "generic", "--size", "9", "--seed", "0",
            "--data", str(data_csv), "--out", str(result_path),
        ])
        assert code == 0
        payload = json.loads(result_path.read_text())
        assert set(payload) == {"theta_map", "objective", "online_ms", "rel_err"}

    def test_full_order_large_refused_exit_3(self, tmp_path, monkeypatch):
        monkeypatch.delenv(MEMORY_BUDGET_ENV, raising=False)
        data_csv = tmp_path / "y.csv"
        make_data_csv(data_csv, size=64)
        code = main([
            "invert", "--model", "generic", "--size", "64", "--seed", "0",
            "--data", str(data_csv), "--out", str(tmp_path / "inv.json"),
        ])
        assert code == 3

    def test_system_file_input(self, tmp_path):
        problem, grid, traj = make_data_csv(tmp_path / "y.csv", size=4)
        serialize.save_system(problem.system, tmp_path / "system.json")
        code = main([
            "invert", "--system", str(tmp_path / "system.json"),
            "--data", str(tmp_path / "y.csv"), "--out", str(tmp_path / "inv.json"),
        ])
        assert code == 0


class TestBenchmarkCommand:
    def test_generic_suite_outputs(self, tmp_path):
        out = tmp_path / "bench"
        code = main([
            "benchmark", "--suite", "generic", "--sizes", "9",
            "--methods", "trust,trust_data_only", "--seeds", "0,1",
            "--out-dir", str(out),
        ])
        assert code == 0
        results = (out / "results.csv").read_text().splitlines()
        assert results[0] == "# morinv-results v1"
        assert len(results) == 2 + 1 * 2 * 2  # header lines + sizes*methods*seeds
        for name in ("speedup.csv", "plot_offline.dat", "plot_online.dat",
                     "plot_relerr.dat", "fig_offline.png", "fig_online.png", "fig_relerr.png"):
            assert (out / name).exists(), name

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "bench.cfg"
        cfg.write_text(
            "# benchmark configuration\n"
            "sizes = 9\n"
            "methods = trust_data_only\n"
            "seeds = 0\n"
            "noise_variance_rel = 1e-4\n"
        )
        out = tmp_path / "bench"
        code = main([
            "benchmark", "--suite", "generic", "--config", str(cfg),
            "--out-dir", str(out),
        ])
        assert code == 0
        lines = (out / "results.csv").read_text().splitlines()
        assert len(lines) == 3

    def test_fmri_suite_state_dimension(self, tmp_path):
        out = tmp_path / "bench"
        code = main([
            "benchmark", "--suite", "fmri", "--sizes", "9",
            "--methods", "trust_data_only", "--seeds", "0",
            "--out-dir", str(out),
        ])
        assert code == 0
        rows = (out / "results.csv").read_text().splitlines()[2:]
        fields = rows[0].split(",")
        assert fields[4] == "45"  # N column for n=9 regions
