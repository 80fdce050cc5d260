"""Scenario generation, benchmark orchestration and trace emission.

Random scenarios follow the experimental protocol: unit-variance Rayleigh
channels, a 120-degree broadside sector sampled at Q angles (endpoints
included), desired pattern uniform on [0.5, 1.5], a shared SINR target drawn
uniformly in dB, log-uniform MSE budget, unit noise.  Randomness comes from a
counter-based Philox generator keyed by the config seed; instance i draws from
`Philox(key=seed).jumped(i)`, and resamples consume further values of the same
stream, so a (config, seed, instance) triple is fully reproducible.
"""

from __future__ import annotations

import json
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.optimize import root

from . import fileio
from .ascent import (
    AscentParams,
    InfeasibleScenarioError,
    InnerResult,
    InnerUnboundedError,
    IsacSolution,
    dual_ascent_solve,
)
from .downlink import (
    DownlinkProblem,
    FpiStatus,
    dual_matrix,
    fpi_solve,
    interference_map_raw,
)
from .model import (
    BeamformingSolution,
    Scenario,
    build_sensing_operator,
    beampattern_mse,
    check_solution,
)

METHODS = ("dual-fpi", "direct-sdp", "dual-sdp")


@dataclass(frozen=True)
class GenConfig:
    """Scenario-generation config; ranges follow the experimental protocol."""

    K: int
    M: int
    Q: int = 36
    eta_range: tuple[float, float] = (1e-8, 1e-3)
    gamma_db_range: tuple[float, float] = (-30.0, -10.0)
    d_range: tuple[float, float] = (0.5, 1.5)
    sigma2: float = 1.0
    sector: float = 2.0 * np.pi / 3.0  # broadside-centered, endpoints included
    seed: int = 0
    screen: bool = True
    max_resamples: int = 50

    def __post_init__(self):
        if self.K < 1 or self.M < 1 or self.Q < 1:
            raise ValueError("K, M and Q must be positive")
        for lo, hi in (self.eta_range, self.gamma_db_range, self.d_range):
            if not lo <= hi:
                raise ValueError("ranges must be nonempty")

    def grid(self) -> np.ndarray:
        half = self.sector / 2.0
        return np.linspace(-half, half, self.Q)


def _draw_scenario(cfg: GenConfig, rng: np.random.Generator) -> Scenario:
    d = rng.uniform(cfg.d_range[0], cfg.d_range[1], cfg.Q)
    gamma_db = rng.uniform(cfg.gamma_db_range[0], cfg.gamma_db_range[1])
    gamma = np.full(cfg.K, 10.0 ** (gamma_db / 10.0))
    log_lo, log_hi = np.log10(cfg.eta_range[0]), np.log10(cfg.eta_range[1])
    eta = 10.0 ** rng.uniform(log_lo, log_hi)
    channels = (
        rng.standard_normal((cfg.K, cfg.M)) + 1j * rng.standard_normal((cfg.K, cfg.M))
    ) / np.sqrt(2.0)
    while np.any(np.all(channels == 0, axis=1)):  # measure-zero guard
        channels = (
            rng.standard_normal((cfg.K, cfg.M)) + 1j * rng.standard_normal((cfg.K, cfg.M))
        ) / np.sqrt(2.0)
    return Scenario(
        channels=channels,
        gamma=gamma,
        sigma2=np.full(cfg.K, cfg.sigma2),
        theta=cfg.grid(),
        d=d,
        eta=eta,
    )


def _screen(scenario: Scenario, params: AscentParams) -> bool:
    """Accept a draw when the solver terminates by its own stopping rule.

    A draw whose MSE budget is already met by the classical solution is
    accepted immediately; otherwise the full outer loop must converge.
    """
    op = build_sensing_operator(scenario.theta, scenario.d, scenario.M)
    try:
        sol = dual_ascent_solve(scenario, params)
    except InfeasibleScenarioError:
        return False
    if sol.status == "converged":
        return True
    return beampattern_mse(
        BeamformingSolution.from_covariances(sol.covariances).total_covariance, op
    ) <= scenario.eta


def generate_scenario(
    cfg: GenConfig,
    instance: int = 0,
    params: AscentParams | None = None,
    return_resamples: bool = False,
):
    """Draw one scenario; with screening enabled, resample until solvable.

    Deterministic: the same (cfg, instance) pair always yields the same
    scenario, byte for byte.
    """
    rng = np.random.Generator(np.random.Philox(key=cfg.seed).jumped(instance))
    params = params or AscentParams(max_outer=300)
    resamples = 0
    scenario = _draw_scenario(cfg, rng)
    if cfg.screen:
        while not _screen(scenario, params):
            resamples += 1
            if resamples > cfg.max_resamples:
                raise RuntimeError(
                    f"no feasible scenario within {cfg.max_resamples} resamples for {cfg}"
                )
            scenario = _draw_scenario(cfg, rng)
    if return_resamples:
        return scenario, resamples
    return scenario


# ---------------------------------------------------------------------------
# benchmark


@dataclass(frozen=True)
class RunRecord:
    """One (cell, seed, method) outcome."""

    K: int
    M: int
    method: str
    instance: int
    seconds: float
    objective: float
    sinr_violation: float
    mse_violation: float
    status: str


@dataclass(frozen=True)
class BenchmarkRow:
    """Aggregated per-(K, M, method) row of the report."""

    K: int
    M: int
    method: str
    mean_seconds: float
    mean_objective: float
    mean_obj_error: float | None  # vs the direct-sdp reference, blank without it
    sinr_violation: float
    mse_violation: float
    seeds: int
    failures: int


@dataclass(frozen=True)
class BenchmarkReport:
    rows: tuple[BenchmarkRow, ...]
    runs: tuple[RunRecord, ...]

    def write_csv(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report = out_dir / "report.csv"
        runs = out_dir / "runs.csv"
        import csv

        with report.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                [
                    "K", "M", "method", "mean_seconds", "mean_objective",
                    "mean_obj_error", "sinr_violation", "mse_violation",
                    "seeds", "failures",
                ]
            )
            for r in self.rows:
                w.writerow(
                    [
                        r.K, r.M, r.method, repr(float(r.mean_seconds)),
                        repr(float(r.mean_objective)),
                        "" if r.mean_obj_error is None else repr(float(r.mean_obj_error)),
                        repr(float(r.sinr_violation)), repr(float(r.mse_violation)),
                        r.seeds, r.failures,
                    ]
                )
        with runs.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["K", "M", "method", "instance", "seconds", "objective",
                 "sinr_violation", "mse_violation", "status"]
            )
            for r in self.runs:
                w.writerow(
                    [r.K, r.M, r.method, r.instance, repr(float(r.seconds)),
                     repr(float(r.objective)), repr(float(r.sinr_violation)),
                     repr(float(r.mse_violation)), r.status]
                )
        return report, runs


class OracleClient:
    """File-based client for the external SDP validator.

    Every call writes an instance file, runs `<cmd> <subcommand> <file>` in a
    fresh process and reads the solution file back.  Solve times come from the
    validator's self-reported wall time, so process startup and I/O do not
    pollute the benchmark clocks.
    """

    def __init__(self, cmd: str = "oracle", workdir=None):
        self.cmd = cmd
        self._workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="isacbf-oracle-"))
        self._workdir.mkdir(parents=True, exist_ok=True)
        self._n = 0
        self.call_wall_seconds = 0.0

    def available(self) -> bool:
        try:
            subprocess.run(
                [self.cmd, "--help"], capture_output=True, check=True, timeout=120
            )
            return True
        except (OSError, subprocess.SubprocessError):
            return False

    def _run(self, args: list[str]) -> dict:
        t0 = time.perf_counter()
        proc = subprocess.run(args, capture_output=True, text=True)
        self.call_wall_seconds += time.perf_counter() - t0
        if proc.returncode != 0:
            raise RuntimeError(f"oracle call failed: {' '.join(args)}\n{proc.stderr[-2000:]}")
        return {}

    def solve_sdp(self, scenario: Scenario, tag: str) -> dict:
        self._n += 1
        inst = self._workdir / f"{tag}-{self._n}.json"
        out = self._workdir / f"{tag}-{self._n}-sol.json"
        fileio.save_instance(scenario, inst)
        self._run([self.cmd, "solve-sdp", str(inst), "--out", str(out)])
        return fileio.load_solution(out)

    def solve_gdb(self, prob: DownlinkProblem, tag: str) -> dict:
        self._n += 1
        inst = self._workdir / f"{tag}-{self._n}.json"
        out = self._workdir / f"{tag}-{self._n}-sol.json"
        fileio.save_downlink_instance(prob, inst)
        self._run([self.cmd, "solve-gdb", str(inst), "--out", str(out)])
        return json.loads(out.read_text())


class OracleGdbInnerSolver:
    """Inner engine delegating each weighted downlink solve to the external validator."""

    _OK = ("optimal", "optimal_inaccurate")

    def __init__(self, scenario: Scenario, client: OracleClient):
        self._scenario = scenario
        self._client = client
        self.last_attempt_seconds = 0.0

    def solve(self, lam: np.ndarray, weight: np.ndarray) -> InnerResult:
        prob = DownlinkProblem(
            weight=weight,
            channels=self._scenario.channels,
            gamma=self._scenario.gamma,
            sigma2=self._scenario.sigma2,
        )
        data = self._client.solve_gdb(prob, "gdb")
        self.last_attempt_seconds = float(data.get("wall_time_s", 0.0))
        if data.get("status") not in self._OK:
            raise InnerUnboundedError(f"oracle status {data.get('status')}")
        covs = fileio.unpack_complex(data["V"])
        return InnerResult(
            value=float(data["objective"]),
            covariances=covs,
            powers=np.asarray(data["p"], dtype=float),
            dual_objective=float("nan"),
            solve_seconds=self.last_attempt_seconds,
        )


def _run_dual_fpi(scenario: Scenario, params: AscentParams) -> tuple[IsacSolution, float]:
    t0 = time.perf_counter()
    sol = dual_ascent_solve(scenario, params)
    return sol, time.perf_counter() - t0


def run_benchmark(
    cells,
    seeds: int,
    methods,
    base_cfg: GenConfig | None = None,
    params: AscentParams | None = None,
    oracle_cmd: str = "oracle",
    out_dir=None,
    jobs: int = 1,
) -> BenchmarkReport:
    """Run each requested method on `seeds` scenarios per (K, M) cell.

    Timing is the wall clock of the solve alone: the in-process call for
    dual-fpi, the validator-reported solve time for direct-sdp, and for
    dual-sdp the sum of validator-reported inner times plus the outer-loop
    overhead (wall minus subprocess walls).  Per-instance failures become row
    flags, not crashes.  Oracle-backed methods are skipped (flagged
    "unavailable") when the validator command cannot be run.
    """
    methods = [m for m in methods]
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method '{m}'; choose from {METHODS}")
    params = params or AscentParams()
    base_cfg = base_cfg or GenConfig(K=2, M=2)
    need_oracle = any(m in ("direct-sdp", "dual-sdp") for m in methods)
    client = OracleClient(oracle_cmd, workdir=out_dir and Path(out_dir) / "oracle-io")
    oracle_ok = client.available() if need_oracle else False

    runs: list[RunRecord] = []
    references: dict[tuple[int, int, int], float] = {}

    def one_cell(cell):
        k, m = cell
        cfg = replace(base_cfg, K=k, M=m)
        cell_runs = []
        for i in range(seeds):
            scenario = generate_scenario(cfg, instance=i, params=params)
            op = build_sensing_operator(scenario.theta, scenario.d, scenario.M)
            for method in methods:
                try:
                    if method == "dual-fpi":
                        sol, secs = _run_dual_fpi(scenario, params)
                        rep = sol.report
                        cell_runs.append(
                            RunRecord(k, m, method, i, secs, sol.total_power,
                                      rep.sinr_violation, rep.mse_violation, sol.status)
                        )
                    elif method == "direct-sdp":
                        if not oracle_ok:
                            cell_runs.append(
                                RunRecord(k, m, method, i, float("nan"), float("nan"),
                                          float("nan"), float("nan"), "unavailable")
                            )
                            continue
                        data = client.solve_sdp(scenario, f"k{k}m{m}i{i}")
                        covs = data["V"]
                        rep = check_solution(
                            scenario, BeamformingSolution.from_covariances(covs), op=op
                        )
                        cell_runs.append(
                            RunRecord(k, m, method, i, float(data.get("wall_time_s", float("nan"))),
                                      float(data["objective"]), rep.sinr_violation,
                                      rep.mse_violation, str(data.get("status", "")))
                        )
                        references[(k, m, i)] = float(data["objective"])
                    elif method == "dual-sdp":
                        if not oracle_ok:
                            cell_runs.append(
                                RunRecord(k, m, method, i, float("nan"), float("nan"),
                                          float("nan"), float("nan"), "unavailable")
                            )
                            continue
                        inner = OracleGdbInnerSolver(scenario, client)
                        wall0 = client.call_wall_seconds
                        t0 = time.perf_counter()
                        # plain subgradient stopping: the backend's solution noise
                        # sits above the guard levels and would stall the guards
                        sol = dual_ascent_solve(
                            scenario, params.without_guards(), inner_solver=inner
                        )
                        wall = time.perf_counter() - t0
                        overhead = wall - (client.call_wall_seconds - wall0)
                        rep = sol.report
                        cell_runs.append(
                            RunRecord(k, m, method, i, sol.inner_seconds + max(0.0, overhead),
                                      sol.total_power, rep.sinr_violation,
                                      rep.mse_violation, sol.status)
                        )
                except (InfeasibleScenarioError, RuntimeError) as exc:
                    cell_runs.append(
                        RunRecord(k, m, method, i, float("nan"), float("nan"),
                                  float("nan"), float("nan"), f"failed: {exc}")
                    )
        return cell_runs

    cells = list(cells)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for cell_runs in pool.map(one_cell, cells):
                runs.extend(cell_runs)
    else:
        for cell in cells:
            runs.extend(one_cell(cell))

    rows = []
    for k, m in cells:
        for method in methods:
            sel = [r for r in runs if (r.K, r.M, r.method) == (k, m, method)]
            good = [r for r in sel if np.isfinite(r.seconds)]
            failures = len(sel) - len(good)
            errs = [
                abs(r.objective - references[(k, m, r.instance)]) / abs(references[(k, m, r.instance)])
                for r in good
                if (k, m, r.instance) in references and references[(k, m, r.instance)] != 0
            ]
            rows.append(
                BenchmarkRow(
                    K=k,
                    M=m,
                    method=method,
                    mean_seconds=float(np.mean([r.seconds for r in good])) if good else float("nan"),
                    mean_objective=float(np.mean([r.objective for r in good])) if good else float("nan"),
                    mean_obj_error=float(np.mean(errs)) if errs else None,
                    sinr_violation=float(np.mean([r.sinr_violation for r in good])) if good else float("nan"),
                    mse_violation=float(np.mean([r.mse_violation for r in good])) if good else float("nan"),
                    seeds=len(sel),
                    failures=failures,
                )
            )
    report = BenchmarkReport(rows=tuple(rows), runs=tuple(runs))
    if out_dir is not None:
        report.write_csv(out_dir)
    return report


# ---------------------------------------------------------------------------
# fixed-point traces


def projected_fpi(
    prob: DownlinkProblem,
    beta0: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 10_000,
    cap: float = 1e12,
):
    """Heuristic variant beta <- max(I(beta), 0); can get trapped at the origin.

    Returns (trace, status_string).
    """
    beta = np.array(beta0, dtype=float)
    trace = [beta.copy()]
    for _ in range(max_iter):
        vals, evaluable = interference_map_raw(beta, prob)
        if not evaluable:
            return np.array(trace), "not_evaluable"
        new = np.maximum(vals, 0.0)
        trace.append(new.copy())
        if np.any(new > cap):
            return np.array(trace), "unbounded"
        if np.max(np.abs(new - beta)) <= tol:
            return np.array(trace), "converged"
        beta = new
    return np.array(trace), "iteration_limit"


def emit_fpi_trace(
    prob: DownlinkProblem,
    inits,
    variant: str = "plain",
    out_dir=".",
    grid_n: int = 201,
    box_hi: float | None = None,
    tol: float = 1e-12,
    max_iter: int = 10_000,
) -> list[Path]:
    """Emit per-initialization iterate CSVs plus (for K=2) map/determinant curves.

    Each init i produces trace_<variant>_<i>.csv and a sidecar
    trace_<variant>_<i>.json carrying the exit status, terminal point and the
    boundedness verdict.  For two-user problems a curves.csv samples the raw
    map components and det C(beta) on a grid for external plotting.
    """
    if variant not in ("plain", "projected"):
        raise ValueError("variant must be 'plain' or 'projected'")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    terminals = []
    for idx, beta0 in enumerate(inits):
        beta0 = np.asarray(beta0, dtype=float)
        if variant == "plain":
            outcome = fpi_solve(prob, beta0=beta0, tol=tol, max_iter=max_iter)
            trace, status = outcome.trace, outcome.status.value
            sidecar = {
                "status": status,
                "bounded": outcome.bounded,
                "beta_star": None if outcome.beta_star is None else outcome.beta_star.tolist(),
                "residual": outcome.residual,
            }
        else:
            trace, status = projected_fpi(prob, beta0, tol=tol, max_iter=max_iter)
            sidecar = {
                "status": status,
                "bounded": None,
                "beta_star": trace[-1].tolist() if status == "converged" else None,
                "residual": float(np.max(np.abs(trace[-1] - trace[-2]))) if len(trace) > 1 else 0.0,
            }
        terminals.append(trace[-1])
        path = out_dir / f"trace_{variant}_{idx}.csv"
        fileio.write_fpi_trace_csv(path, trace)
        (out_dir / f"trace_{variant}_{idx}.json").write_text(json.dumps(sidecar, indent=1))
        paths.append(path)

    if prob.K == 2:
        if box_hi is None:
            finite = [t for t in terminals if np.all(np.isfinite(t))]
            box_hi = 2.0 * max(1.0, max(float(np.max(t)) for t in finite) if finite else 1.0)
        axis = np.linspace(0.0, box_hi, grid_n)
        import csv

        curves = out_dir / "curves.csv"
        with curves.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["beta_0", "beta_1", "i_0", "i_1", "det_c"])
            for b0 in axis:
                for b1 in axis:
                    beta = np.array([b0, b1])
                    vals, _ = interference_map_raw(beta, prob)
                    det = np.linalg.det(dual_matrix(beta, prob))
                    w.writerow(
                        [repr(float(b0)), repr(float(b1))]
                        + ["" if not np.isfinite(v) else repr(float(v)) for v in vals]
                        + [repr(float(np.real(det)))]
                    )
        paths.append(curves)
    return paths


def enumerate_fixed_points(
    prob: DownlinkProblem,
    box_hi: float,
    grid_n: int = 80,
    tol: float = 1e-9,
) -> np.ndarray:
    """Find all fixed points of the interference map in [0, box_hi]^K by dense search.

    Independent of the iteration itself: scans a grid for small ||I(beta) -
    beta||, polishes candidates with a general root finder, and deduplicates.
    Intended for small K (the two-user phase portraits); cost grows as
    grid_n^K.
    """

    def residual_fn(beta):
        if np.any(beta < -0.1 * box_hi) or np.any(beta > 10 * box_hi):
            return np.full_like(beta, 1e6)
        vals, evaluable = interference_map_raw(beta, prob)
        if not evaluable or not np.all(np.isfinite(vals)):
            return np.full_like(beta, 1e6)
        return vals - beta

    axes = [np.linspace(0.0, box_hi, grid_n)] * prob.K
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    scores = np.array([float(np.max(np.abs(residual_fn(p)))) for p in points])
    order = np.argsort(scores)
    roots = []
    cell = box_hi / (grid_n - 1)
    for idx in order[: max(50, grid_n)]:
        if scores[idx] > 10 * cell:
            break
        sol = root(residual_fn, points[idx], method="hybr", tol=1e-13)
        if not sol.success or np.max(np.abs(sol.fun)) > 1e-8:
            continue
        cand = sol.x
        if np.any(cand < -1e-9) or np.any(cand > box_hi * (1 + 1e-9)):
            continue
        if all(np.max(np.abs(cand - r)) > tol * (1.0 + np.max(np.abs(r))) + 1e-9 for r in roots):
            roots.append(cand)
    if not roots:
        return np.empty((0, prob.K))
    roots = np.array(sorted(roots, key=lambda r: tuple(r)))
    return roots
