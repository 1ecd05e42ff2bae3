"""Level-set evolution driven by the same smoothed pseudo-energy, for comparison runs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .material import chi_from_psi
from .optimizer import DesignState, OptimizationError, Optimizer, Problem, StepResult, soft_fraction

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LevelSetState:
    phi: np.ndarray
    lam: float = 0.0
    delta_t: float = 0.1
    rho: float = 0.05

    def __post_init__(self):
        if not (self.delta_t >= 0 and self.rho > 0):
            raise ValueError("delta_t must be >= 0 and rho > 0")


def levelset_step(state: LevelSetState, sensitivity, exchange, constraint: float) -> LevelSetState:
    """phi -= delta_t / exchange * sensitivity and lambda += rho * constraint."""
    phi = state.phi - state.delta_t / np.asarray(exchange, float) * np.asarray(sensitivity, float)
    return replace(state, phi=phi, lam=state.lam + state.rho * constraint)


def nodal_exchange(phi: np.ndarray, beta: float) -> np.ndarray:
    return np.where(phi >= 0, -(1.0 - beta), 1.0 - beta)


def lagrangian_sensitivity(xi_hat: np.ndarray, lam: float, exchange: np.ndarray) -> np.ndarray:
    """Derivative of the Lagrangian along each node's admissible phase change.

    Hard nodes can only soften and soft nodes only harden, so the sign follows
    the exchange direction: softening a node with xi_hat above lambda raises
    the Lagrangian.
    """
    return -np.sign(exchange) * (xi_hat - lam)


class LevelSetOptimizer(Optimizer):
    def __init__(self, problem: Problem, delta_t: float = 0.1, rho: float = 0.05, max_iters: int = 300):
        super().__init__(problem)
        if max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        self.delta_t = delta_t
        self.rho = rho
        self.max_iters = max_iters

    def run(self, state: DesignState | None = None, callback=None) -> list[StepResult]:
        mesh = self.problem.mesh
        design = state or DesignState.all_hard(mesh)
        ls = LevelSetState(np.ones(mesh.n_nodes), 0.0, self.delta_t, self.rho)
        results = []
        for t in self.problem.optimizer.targets:
            ls, result = self._run_step(design, ls, t)
            results.append(result)
            if callback is not None:
                callback(result)
        return results

    def _run_step(self, design: DesignState, ls: LevelSetState, t: float):
        p = self.problem
        cfg = p.optimizer
        frozen = ~self.optimizable & p.mesh.active
        beta = p.material.beta_kappa
        converged = False
        evaluation = None
        xi_hat = np.zeros(p.mesh.n_nodes)
        it = 0
        frac_soft, frac = soft_fraction(p.mesh, ls.phi, frozen, cfg.quadrature_order)
        for it in range(1, self.max_iters + 1):
            evaluation = self.evaluate(design.hard)
            if evaluation.xi is None:
                log.warning("t=%g: no sensitivity available, keeping the current design", t)
                break
            if not np.isfinite(evaluation.cost):
                raise OptimizationError(f"t={t:g}: cost is not finite at level-set iteration {it}")
            xi_hat = self.smoothed_energy(evaluation, design)
            exchange = nodal_exchange(ls.phi, beta)
            sensitivity = lagrangian_sensitivity(xi_hat, ls.lam, exchange)
            ls = levelset_step(ls, sensitivity, exchange, t - frac_soft)
            hard = chi_from_psi(p.mesh, p.material, ls.phi)
            changed = self.changed_fraction(design.hard, hard)
            design.hard = hard
            frac_soft, frac = soft_fraction(p.mesh, ls.phi, frozen, cfg.quadrature_order)
            if changed <= cfg.tol_chi and abs(t - frac_soft) <= cfg.tol_constraint:
                converged = True
                break
        if not converged:
            log.warning("t=%g: level set not converged after %d iterations", t, it)
        final = self.evaluate(design.hard, sensitivities=False)
        states = dict(evaluation.states) if evaluation is not None else {}
        states.update(final.states)
        design.lam, design.psi = ls.lam, ls.phi
        result = StepResult(
            t=float(t), hard=design.hard.copy(), psi=ls.phi.copy(), lam=float(ls.lam), cost=float(final.cost),
            outer_iters=it, bisect_iters=0, constraint_residual=float(t - frac_soft), converged=converged,
            xi_hat=xi_hat, hard_fraction=frac, states=states, values=dict(final.values),
        )
        return ls, result


def run_levelset(problem: Problem, delta_t: float = 0.1, rho: float = 0.05, max_iters: int = 300, callback=None):
    return LevelSetOptimizer(problem, delta_t, rho, max_iters).run(callback=callback)
