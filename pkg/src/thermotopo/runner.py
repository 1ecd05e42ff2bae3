"""Run orchestration: single runs, the omega sweep and the closed-form versus level-set comparison."""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .build import build_mesh, build_problem
from .config import ProblemConfig, dump_config
from .functionals import Normalization
from .io import SnapshotWriter, load_normalization, save_normalization
from .levelset import LevelSetOptimizer
from .optimizer import Optimizer, Problem, StepResult

log = logging.getLogger(__name__)

OUTPUT_ENV = "THERMOTOPO_OUTPUT_DIR"


@dataclass
class RunSummary:
    method: str
    results: list[StepResult]
    output_dir: Path | None

    @property
    def total_iterations(self) -> int:
        return sum(r.outer_iters for r in self.results)

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.results)


def output_directory(cfg: ProblemConfig, base: Path | None = None) -> Path:
    """The configured directory, unless the environment overrides it; relative paths resolve against ``base``."""
    path = Path(os.environ.get(OUTPUT_ENV) or cfg.output.directory)
    if not path.is_absolute() and base is not None:
        path = base / path
    return path


def make_optimizer(problem: Problem, cfg: ProblemConfig, method: str | None = None) -> Optimizer:
    method = method or cfg.optimizer.method
    if method == "levelset":
        ls = cfg.optimizer.levelset
        return LevelSetOptimizer(problem, ls.delta_t, ls.rho, ls.max_iters)
    return Optimizer(problem)


def run_problem(problem: Problem, cfg: ProblemConfig, output_dir: Path | None = None, method: str | None = None,
                prefix: str = "step") -> RunSummary:
    method = method or cfg.optimizer.method
    optimizer = make_optimizer(problem, cfg, method)
    writer = None
    if output_dir is not None:
        writer = SnapshotWriter(output_dir, problem.mesh, cfg.output.formats, cfg.output.snapshot_every, prefix)

    def report(result: StepResult):
        log.info(
            "t=%.4f cost=%.6g lambda=%.4g iters=%d bisect=%d C=%.2e%s", result.t, result.cost, result.lam,
            result.outer_iters, result.bisect_iters, result.constraint_residual,
            "" if result.converged else " (not converged)",
        )
        if writer is not None:
            writer(result)

    return RunSummary(method, optimizer.run(callback=report), output_dir)


def normalization_key(cfg: ProblemConfig) -> dict:
    """Identifies the setup independently of omega and output settings."""
    neutral = replace(cfg, functional=replace(cfg.functional, omega=0.5), output=replace(cfg.output, directory="."))
    return {"sha256": hashlib.sha256(dump_config(neutral).encode()).hexdigest()}


def endpoint_normalization(cfg: ProblemConfig, mesh=None) -> Normalization:
    """Run the pure-average and pure-variance problems and read off utopia and worst values.

    Values are gathered over the all-hard start and every step of each run.
    Scaling does not change a single-objective design, so the endpoint runs
    use unit constants.
    """
    mesh = mesh or build_mesh(cfg)
    unit = Normalization()
    values = {}
    for omega in (1.0, 0.0):
        problem = build_problem(cfg, unit, omega, mesh)
        start = problem.functional.evaluate(mesh, problem.material, np.ones(mesh.n_elements, bool), False)
        summary = run_problem(problem, cfg, None, "closed_form")
        j_av = [start.values["j_av"]] + [r.values["j_av"] for r in summary.results]
        j_vr = [start.values["j_vr"]] + [r.values["j_vr"] for r in summary.results]
        values[omega] = (j_av, j_vr)
    j_av_utopia = min(values[1.0][0])
    j_vr_max = max(values[1.0][1])
    j_av_max = max(values[0.0][0])
    j_vr_utopia = 0.0 if cfg.functional.variance_utopia_zero else min(values[0.0][1])
    return Normalization(j_av_utopia, j_av_max, j_vr_utopia, j_vr_max)


def resolve_normalization(cfg: ProblemConfig, output_dir: Path | None, mesh=None) -> Normalization | None:
    if cfg.functional.kind != "temp_multi":
        return None
    if cfg.functional.normalization is not None:
        n = cfg.functional.normalization
        return Normalization(n.j_av_utopia, n.j_av_max, n.j_vr_utopia, n.j_vr_max)
    key = normalization_key(cfg)
    cache = output_dir / cfg.functional.normalization_cache if output_dir is not None else None
    if cache is not None:
        cached = load_normalization(cache, key)
        if cached is not None:
            log.info("using cached normalization from %s", cache)
            return cached
    norm = endpoint_normalization(cfg, mesh)
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        save_normalization(cache, norm, key)
    return norm


def run_config(cfg: ProblemConfig, output_dir: Path | None = None, method: str | None = None) -> RunSummary:
    mesh = build_mesh(cfg)
    norm = resolve_normalization(cfg, output_dir, mesh)
    problem = build_problem(cfg, norm, mesh=mesh)
    return run_problem(problem, cfg, output_dir, method)


def sweep_omega(cfg: ProblemConfig, omegas, output_dir: Path | None = None) -> list[tuple[float, RunSummary]]:
    """One run per weight, sharing the normalization; writes ``pareto.csv`` with the final-step objectives."""
    if cfg.functional.kind != "temp_multi":
        raise ValueError("sweep-omega needs a temp_multi functional")
    mesh = build_mesh(cfg)
    norm = resolve_normalization(cfg, output_dir, mesh)
    runs = []
    for omega in omegas:
        sub = output_dir / f"omega_{omega:.4f}" if output_dir is not None else None
        problem = build_problem(cfg, norm, omega, mesh)
        runs.append((float(omega), run_problem(problem, cfg, sub)))
    if output_dir is not None:
        lines = ["omega,t,cost,j_av,j_vr"]
        for omega, summary in runs:
            last = summary.results[-1]
            lines.append(f"{omega:.6g},{last.t:.12g},{last.cost:.12e},{last.values['j_av']:.12e},{last.values['j_vr']:.12e}")
        (output_dir / "pareto.csv").write_text("\n".join(lines) + "\n")
    return runs


@dataclass
class Comparison:
    closed_form: RunSummary
    levelset: RunSummary

    @property
    def ratio(self) -> float:
        return self.levelset.total_iterations / max(self.closed_form.total_iterations, 1)

    def cost_gaps(self) -> list[float]:
        """Relative cost difference per step."""
        return [
            abs(a.cost - b.cost) / max(abs(a.cost), abs(b.cost), 1e-300)
            for a, b in zip(self.closed_form.results, self.levelset.results)
        ]


def compare(cfg: ProblemConfig, output_dir: Path | None = None) -> Comparison:
    mesh = build_mesh(cfg)
    norm = resolve_normalization(cfg, output_dir, mesh)
    summaries = {}
    for method in ("closed_form", "levelset"):
        problem = build_problem(cfg, norm, mesh=mesh)
        sub = output_dir / method if output_dir is not None else None
        summaries[method] = run_problem(problem, cfg, sub, method)
    return Comparison(summaries["closed_form"], summaries["levelset"])
