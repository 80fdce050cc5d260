import csv
import json
from pathlib import Path

import numpy as np
import pytest

from isacbf import cli, fileio
from isacbf.ascent import AscentParams, dual_ascent_solve
from isacbf.downlink import DownlinkProblem, fpi_solve
from isacbf.harness import (
    GenConfig,
    enumerate_fixed_points,
    emit_fpi_trace,
    generate_scenario,
    projected_fpi,
    run_benchmark,
)
from isacbf.model import Scenario, beampattern_mse, build_sensing_operator

FIXTURE = Path(__file__).parent / "fixtures" / "two_fixed_points.json"


@pytest.fixture(scope="module")
def two_fp_problem():
    return fileio.load_downlink_instance(FIXTURE)


class TestGeneration:
    def test_deterministic(self):
        cfg = GenConfig(K=2, M=2, seed=42)
        a = generate_scenario(cfg, instance=3)
        b = generate_scenario(cfg, instance=3)
        assert json.dumps(fileio.scenario_to_dict(a)) == json.dumps(fileio.scenario_to_dict(b))

    def test_instances_differ(self):
        cfg = GenConfig(K=2, M=2, seed=42)
        a = generate_scenario(cfg, instance=0)
        b = generate_scenario(cfg, instance=1)
        assert not np.array_equal(a.channels, b.channels)

    def test_channel_moments(self):
        # unit-variance complex entries: E|h|^2 == 1 within 5% over many draws
        cfg = GenConfig(K=2, M=2, seed=1, screen=False)
        sq = []
        for i in range(2500):
            sc = generate_scenario(cfg, instance=i)
            sq.append(np.abs(sc.channels) ** 2)
        assert np.mean(sq) == pytest.approx(1.0, rel=0.05)

    def test_parameter_ranges(self):
        cfg = GenConfig(K=3, M=2, seed=9, screen=False)
        for i in range(20):
            sc = generate_scenario(cfg, instance=i)
            assert 1e-8 <= sc.eta <= 1e-3
            assert np.all((0.001 <= sc.gamma) & (sc.gamma <= 0.1))  # -30..-10 dB
            assert np.all(sc.gamma == sc.gamma[0])  # shared target
            assert np.all((0.5 <= sc.d) & (sc.d <= 1.5))
            assert np.all(sc.sigma2 == 1.0)
            assert sc.Q == 36
            assert sc.theta[0] == pytest.approx(-np.pi / 3)
            assert sc.theta[-1] == pytest.approx(np.pi / 3)

    def test_screening_yields_solvable(self):
        cfg = GenConfig(K=2, M=2, seed=11)
        for i in range(3):
            sc, resamples = generate_scenario(cfg, instance=i, return_resamples=True)
            assert resamples <= cfg.max_resamples
            sol = dual_ascent_solve(sc)
            op = build_sensing_operator(sc.theta, sc.d, sc.M)
            ok = sol.status == "converged" or (
                beampattern_mse(sol.covariances.sum(axis=0), op) <= sc.eta
            )
            assert ok


class TestFileRoundTrips:
    def test_scenario_lossless(self, tmp_path):
        cfg = GenConfig(K=2, M=3, seed=5, screen=False)
        sc = generate_scenario(cfg, instance=0)
        path = fileio.save_instance(sc, tmp_path / "inst.json")
        back = fileio.load_instance(path)
        assert np.array_equal(back.channels, sc.channels)
        assert np.array_equal(back.theta, sc.theta)
        assert np.array_equal(back.d, sc.d)
        assert back.eta == sc.eta
        assert np.array_equal(back.gamma, sc.gamma)

    def test_downlink_lossless(self, two_fp_problem, tmp_path):
        path = fileio.save_downlink_instance(two_fp_problem, tmp_path / "dl.json")
        back = fileio.load_downlink_instance(path)
        assert np.array_equal(back.weight, two_fp_problem.weight)
        assert np.array_equal(back.channels, two_fp_problem.channels)

    def test_solution_roundtrip(self, tmp_path):
        cfg = GenConfig(K=2, M=2, seed=5, screen=False)
        sc = generate_scenario(cfg, instance=1)
        covs = np.zeros((2, 2, 2), dtype=complex)
        covs[0, 0, 0] = 1.5
        path = fileio.save_solution(
            tmp_path / "sol.json",
            scenario=sc,
            covariances=covs,
            powers=[1.5, 0.0],
            objective=1.5,
            lam=np.zeros(sc.Q),
            status="converged",
        )
        data = fileio.load_solution(path)
        assert np.array_equal(data["V"], covs)
        assert data["objective"] == 1.5
        assert data["status"] == "converged"

    def test_missing_field_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"M": 1, "K": 1}))
        with pytest.raises(ValueError):
            fileio.load_instance(p)


class TestFixedPointMachinery:
    def test_enumeration_finds_both_points(self, two_fp_problem):
        out = fpi_solve(two_fp_problem)
        roots = enumerate_fixed_points(
            two_fp_problem, box_hi=2.0 * float(np.max(out.beta_star)), grid_n=60
        )
        assert len(roots) == 2
        top = roots[np.argmax(roots.sum(axis=1))]
        np.testing.assert_allclose(top, out.beta_star, rtol=1e-8)
        other = roots[np.argmin(roots.sum(axis=1))]
        assert np.all(other <= top)

    def test_enumeration_single_point_for_identity_weight(self, rng):
        h = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2)
        prob = DownlinkProblem(np.eye(2), h, [0.5, 0.5], [1.0, 1.0])
        out = fpi_solve(prob)
        roots = enumerate_fixed_points(prob, box_hi=3.0 * float(np.max(out.beta_star)), grid_n=50)
        assert len(roots) == 1
        np.testing.assert_allclose(roots[0], out.beta_star, rtol=1e-8)

    def test_projected_variant_traps_at_origin(self, two_fp_problem):
        out = fpi_solve(two_fp_problem)
        trace, status = projected_fpi(two_fp_problem, 0.05 * out.beta_star)
        assert status == "converged"
        np.testing.assert_array_equal(trace[-1], np.zeros(2))

    def test_plain_trace_matches_solver(self, two_fp_problem, tmp_path):
        out = fpi_solve(two_fp_problem)
        paths = emit_fpi_trace(
            two_fp_problem, [np.array([100.0, 100.0])], variant="plain", out_dir=tmp_path,
            grid_n=11,
        )
        trace_csv = tmp_path / "trace_plain_0.csv"
        assert trace_csv in paths
        with trace_csv.open() as fh:
            rows = list(csv.DictReader(fh))
        terminal = np.array([float(rows[-1]["beta_0"]), float(rows[-1]["beta_1"])])
        np.testing.assert_allclose(terminal, out.beta_star, rtol=1e-9)
        sidecar = json.loads((tmp_path / "trace_plain_0.json").read_text())
        assert sidecar["status"] == "converged"
        assert sidecar["bounded"] is True
        curves = tmp_path / "curves.csv"
        assert curves.exists()
        with curves.open() as fh:
            crows = list(csv.DictReader(fh))
        assert len(crows) == 11 * 11
        assert {"beta_0", "beta_1", "i_0", "i_1", "det_c"} <= set(crows[0])

    def test_projected_trace_emission(self, two_fp_problem, tmp_path):
        out = fpi_solve(two_fp_problem)
        emit_fpi_trace(
            two_fp_problem,
            [0.05 * out.beta_star],
            variant="projected",
            out_dir=tmp_path,
            grid_n=5,
        )
        sidecar = json.loads((tmp_path / "trace_projected_0.json").read_text())
        assert sidecar["status"] == "converged"
        np.testing.assert_array_equal(np.array(sidecar["beta_star"]), np.zeros(2))


class TestBenchmark:
    def test_dual_fpi_only(self, tmp_path):
        report = run_benchmark(
            cells=[(2, 2)],
            seeds=2,
            methods=["dual-fpi"],
            base_cfg=GenConfig(K=2, M=2, seed=3),
            out_dir=tmp_path,
        )
        assert len(report.rows) == 1
        row = report.rows[0]
        assert row.method == "dual-fpi"
        assert row.failures == 0
        assert row.mean_obj_error is None  # no oracle reference available
        assert np.isfinite(row.mean_seconds)
        assert (tmp_path / "report.csv").exists()
        assert (tmp_path / "runs.csv").exists()
        with (tmp_path / "report.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["mean_obj_error"] == ""

    def test_oracle_methods_flagged_unavailable(self, tmp_path):
        report = run_benchmark(
            cells=[(2, 2)],
            seeds=1,
            methods=["dual-fpi", "direct-sdp"],
            base_cfg=GenConfig(K=2, M=2, seed=3),
            oracle_cmd="definitely-not-a-real-command",
            out_dir=tmp_path,
        )
        direct = [r for r in report.runs if r.method == "direct-sdp"]
        assert all(r.status == "unavailable" for r in direct)

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            run_benchmark(cells=[(2, 2)], seeds=1, methods=["magic"])


class TestCli:
    def test_generate_solve_roundtrip(self, tmp_path, capsys):
        rc = cli.main(
            ["generate", "--K", "2", "--M", "2", "--count", "1", "--seed", "3",
             "--out-dir", str(tmp_path)]
        )
        assert rc == 0
        inst = tmp_path / "instance_0000.json"
        assert inst.exists()
        rc = cli.main(["solve", str(inst), "--out", str(tmp_path / "sol.json")])
        assert rc == 0
        data = fileio.load_solution(tmp_path / "sol.json")
        assert data["status"] == "converged"
        assert (tmp_path / "sol.log.csv").exists()
        sc = fileio.load_instance(inst)
        assert data["V"].shape == (sc.K, sc.M, sc.M)

    def test_trace_command(self, tmp_path):
        rc = cli.main(
            ["trace", "--instance", str(FIXTURE), "--inits", "100,100",
             "--variant", "plain", "--out-dir", str(tmp_path), "--grid", "5"]
        )
        assert rc == 0
        assert (tmp_path / "trace_plain_0.csv").exists()

    def test_bench_command(self, tmp_path):
        rc = cli.main(
            ["bench", "--cells", "2x2", "--seeds", "1", "--methods", "dual-fpi",
             "--seed", "5", "--out-dir", str(tmp_path)]
        )
        assert rc == 0
        assert (tmp_path / "report.csv").exists()
