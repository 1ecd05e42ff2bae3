"""Closed-form topology update: cut the smoothed pseudo-energy at the level meeting the volume target."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .fem import SolverOptions
from .functionals import Evaluation
from .marching import DEFAULT_ORDER, hard_fraction
from .material import MaterialModel, chi_from_psi
from .mesh import Mesh
from .smoothing import Smoother, SmootherConfig

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    pass


class InfeasibleConstraint(OptimizationError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    """Pseudo-time schedule and tolerances.

    ``time_grid`` lists the soft-volume targets of the steps after the
    all-hard start at ``t_start``; an empty grid runs a single step at ``t_start``.
    """

    time_grid: tuple[float, ...] = ()
    t_start: float = 0.0
    tol_chi: float = 0.1
    tol_lambda: float = 0.1
    tol_constraint: float = 1e-3
    max_outer_iters: int = 50
    max_bisection_iters: int = 100
    quadrature_order: int = DEFAULT_ORDER

    def __post_init__(self):
        grid = np.asarray(self.time_grid, float)
        if self.t_start < 0:
            raise ValueError("t_start must be >= 0")
        if len(grid) and (np.any(np.diff(grid) <= 0) or grid[0] <= self.t_start or grid[-1] >= 1):
            raise ValueError("time grid must increase strictly from t_start and stay below 1")
        if min(self.tol_chi, self.tol_lambda, self.tol_constraint) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_outer_iters < 1 or self.max_bisection_iters < 1:
            raise ValueError("iteration caps must be >= 1")

    @classmethod
    def uniform(cls, t_start: float, t_end: float, steps: int, **kwargs) -> "OptimizerConfig":
        grid = tuple(float(t) for t in np.linspace(t_start, t_end, steps + 1)[1:])
        return cls(grid, t_start, **kwargs)

    @property
    def targets(self) -> tuple[float, ...]:
        return self.time_grid or (self.t_start,)


@dataclass(eq=False)
class Problem:
    mesh: Mesh
    material: MaterialModel
    functional: object
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    smoothing: SmootherConfig = field(default_factory=SmootherConfig)
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        self.material.check_mesh(self.mesh)


@dataclass(eq=False)
class StepResult:
    t: float
    hard: np.ndarray
    psi: np.ndarray
    lam: float
    cost: float
    outer_iters: int
    bisect_iters: int
    constraint_residual: float
    converged: bool
    xi_hat: np.ndarray
    hard_fraction: np.ndarray
    states: dict[str, np.ndarray] = field(default_factory=dict)
    values: dict[str, float] = field(default_factory=dict)


@dataclass(eq=False)
class DesignState:
    """Everything carried from one step to the next."""

    hard: np.ndarray
    lam: float | None = None
    reference: tuple[float, float] | None = None
    psi: np.ndarray | None = None

    @classmethod
    def all_hard(cls, mesh: Mesh) -> "DesignState":
        return cls(np.ones(mesh.n_elements, bool))


@dataclass(eq=False)
class CutResult:
    lam: float
    psi: np.ndarray
    hard: np.ndarray
    soft_fraction: float
    hard_fraction: np.ndarray
    iterations: int

    def residual(self, t: float) -> float:
        return t - self.soft_fraction


def shift_reference(xi: np.ndarray, mask: np.ndarray) -> tuple[float, float]:
    """Minimum and range of ``xi`` over ``mask``; a zero range falls back to 1."""
    values = np.asarray(xi)[np.asarray(mask, bool)]
    if not values.size:
        raise OptimizationError("no optimizable element")
    shift = float(values.min())
    span = float(values.max() - shift)
    if not span > 0:
        log.warning("pseudo-energy is uniform; normalizing by 1")
        span = 1.0
    return shift, span


def shift_normalize(xi, hard, reference=None, mask=None):
    """Shift hard entries by the reference minimum and scale everything by its range.

    Returns the normalized field and the reference used. Without a reference it
    is computed over ``mask`` (all entries by default).
    """
    xi = np.asarray(xi, float)
    if reference is None:
        reference = shift_reference(xi, np.ones(xi.shape, bool) if mask is None else mask)
    shift, span = reference
    out = np.where(np.asarray(hard, bool), xi - shift, xi) / span
    return out, reference


def soft_fraction(mesh: Mesh, psi: np.ndarray, frozen: np.ndarray, order: int = DEFAULT_ORDER):
    frac = hard_fraction(mesh, psi, frozen, order)
    return float(np.sum(1 - frac[mesh.active]) / np.count_nonzero(mesh.active)), frac


def cut_and_bisect(
    mesh: Mesh,
    material: MaterialModel,
    xi_hat: np.ndarray,
    target: float,
    tol: float = 1e-3,
    max_iter: int = 100,
    order: int = DEFAULT_ORDER,
) -> CutResult:
    """Find lambda so that psi = xi_hat - lambda leaves a soft fraction within ``tol`` of ``target``.

    The soft fraction grows with lambda. The search starts from the range of
    xi_hat over the nodes of optimizable elements.
    """
    if not 0 <= target < 1:
        raise ValueError("target must lie in [0, 1)")
    opt = material.optimizable(mesh)
    frozen = ~opt & mesh.active
    nodes = np.unique(mesh.elements[opt])
    if not len(nodes):
        raise OptimizationError("no optimizable element")
    values = xi_hat[nodes]
    if not np.all(np.isfinite(values)):
        raise OptimizationError("pseudo-energy is not finite")

    def evaluate(lam, iterations):
        psi = xi_hat - lam
        frac_soft, frac = soft_fraction(mesh, psi, frozen, order)
        hard = chi_from_psi(mesh, material, psi)
        return CutResult(float(lam), psi, hard, frac_soft, frac, iterations)

    lo, hi = float(values.min()), float(values.max())
    result = evaluate(lo, 0)
    if abs(result.residual(target)) <= tol:
        return result
    top = evaluate(hi, 0)
    if top.soft_fraction < target - tol:
        raise InfeasibleConstraint(
            f"target soft fraction {target:g} exceeds the reachable {top.soft_fraction:g}"
        )
    if abs(top.residual(target)) <= tol:
        return top
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        result = evaluate(mid, it)
        r = result.residual(target)
        if abs(r) <= tol:
            return result
        if r > 0:
            lo = mid
        else:
            hi = mid
    raise OptimizationError(f"bisection did not meet the volume target within {max_iter} iterations")


class Optimizer:
    """Runs the closed-form update over the pseudo-time schedule."""

    def __init__(self, problem: Problem):
        self.problem = problem
        self.smoother = Smoother(problem.mesh, problem.smoothing)
        self.optimizable = problem.material.optimizable(problem.mesh)

    def evaluate(self, hard, sensitivities=True) -> Evaluation:
        p = self.problem
        return p.functional.evaluate(p.mesh, p.material, hard, sensitivities, p.solver)

    def smoothed_energy(self, evaluation: Evaluation, state: DesignState) -> np.ndarray:
        """Shifted, normalized and smoothed nodal pseudo-energy."""
        opt = self.optimizable
        if state.reference is None:
            state.reference = shift_reference(evaluation.xi, opt)
        xi, _ = shift_normalize(evaluation.xi, state.hard, state.reference)
        frozen = ~opt & self.problem.mesh.active
        xi[frozen] = xi[opt].max()
        return self.smoother.smooth(xi)

    def changed_fraction(self, before: np.ndarray, after: np.ndarray) -> float:
        active = self.problem.mesh.active
        return float(np.count_nonzero((before != after) & active) / np.count_nonzero(active))

    def run_step(self, state: DesignState, t: float) -> StepResult:
        p = self.problem
        cfg = p.optimizer
        converged = False
        cut = None
        evaluation = None
        xi_hat = None
        total_bisect = 0
        it = 0
        for it in range(1, cfg.max_outer_iters + 1):
            evaluation = self.evaluate(state.hard)
            if evaluation.xi is None:
                log.warning("t=%g: no sensitivity available, keeping the current design", t)
                break
            xi_hat = self.smoothed_energy(evaluation, state)
            cut = cut_and_bisect(
                p.mesh, p.material, xi_hat, t, cfg.tol_constraint, cfg.max_bisection_iters, cfg.quadrature_order
            )
            total_bisect += cut.iterations
            changed = self.changed_fraction(state.hard, cut.hard)
            if state.lam is None:
                lam_change = np.inf
            else:
                lam_change = abs(cut.lam - state.lam) / max(abs(state.lam), 1.0)
            state.hard, state.lam, state.psi = cut.hard, cut.lam, cut.psi
            if changed <= cfg.tol_chi and lam_change <= cfg.tol_lambda:
                converged = True
                break
        if not converged:
            log.warning("t=%g: not converged after %d outer iterations", t, it)
        final = self.evaluate(state.hard, sensitivities=False)
        if not np.isfinite(final.cost):
            raise OptimizationError(f"t={t:g}: cost is not finite")
        states = dict(evaluation.states) if evaluation is not None else {}
        states.update(final.states)
        if cut is None:
            psi = state.psi if state.psi is not None else np.ones(p.mesh.n_nodes)
            frac_soft, frac = soft_fraction(p.mesh, psi, ~self.optimizable & p.mesh.active, cfg.quadrature_order)
            residual = t - frac_soft
            lam = state.lam if state.lam is not None else 0.0
            xi_hat = np.zeros(p.mesh.n_nodes)
        else:
            psi, frac, residual, lam = cut.psi, cut.hard_fraction, cut.residual(t), cut.lam
        return StepResult(
            t=float(t), hard=state.hard.copy(), psi=psi, lam=float(lam), cost=float(final.cost),
            outer_iters=it, bisect_iters=total_bisect, constraint_residual=float(residual),
            converged=converged, xi_hat=xi_hat, hard_fraction=frac, states=states, values=dict(final.values),
        )

    def run(self, state: DesignState | None = None, callback=None) -> list[StepResult]:
        state = state or DesignState.all_hard(self.problem.mesh)
        results = []
        for t in self.problem.optimizer.targets:
            result = self.run_step(state, t)
            results.append(result)
            if callback is not None:
                callback(result)
        return results


def run_step(problem: Problem, state: DesignState, t: float) -> StepResult:
    return Optimizer(problem).run_step(state, t)


def run_schedule(problem: Problem, callback=None) -> list[StepResult]:
    return Optimizer(problem).run(callback=callback)
