"""Cost functionals, adjoint loads and pseudo-energy fields.

Every pseudo-energy returned here follows one convention: ``xi[e]`` is the
derivative of the cost with respect to moving element ``e`` toward the soft
phase, per unit element volume, where the move lowers the relaxed values as
``chi_kappa -= s * (1 - beta_kappa)`` and ``chi_source -= s * (1 - beta_r)``.
A large value means softening is expensive, so the cut keeps it hard.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import (
    DiscreteSystem,
    SolverOptions,
    assemble,
    assembly_pattern,
    boundary_face_operators,
    element_conductivity,
    gradients,
    heat_flux,
    reference_load,
    solve,
)
from .material import ElementChi, MaterialModel, as_element_chi
from .mesh import FaceSelector, Mesh

log = logging.getLogger(__name__)

KINDS = ("compliance", "flux_cloak", "temp_multi")


class FunctionalError(ValueError):
    pass


# element energies ---------------------------------------------------------


def pair_energy(mesh: Mesh, material: MaterialModel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Element mean of 1/2 grad(a) . kappa_ref . grad(b)."""
    w = mesh.reference_basis.weights / mesh.element_volume
    kappa = material.element_kappa(mesh)
    ga, gb = gradients(mesh, a), gradients(mesh, b)
    return 0.5 * np.einsum("g,egi,eij,egj->e", w, ga, kappa, gb)


def source_energy(mesh: Mesh, material: MaterialModel, a: np.ndarray) -> np.ndarray:
    """Element mean of r_ref * a."""
    mean = a[mesh.elements] @ reference_load(mesh) / mesh.element_volume
    return material.element_source(mesh) * mean


def gamma_factors(material: MaterialModel, chi: ElementChi) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of chi^m along the softening direction, for conductivity and source."""
    gk = (1 - material.beta_kappa) * material.m_kappa * chi.kappa ** (material.m_kappa - 1)
    gr = (1 - material.beta_r) * material.m_r * chi.source ** (material.m_r - 1)
    return gk, gr


def xi_from_adjoint(mesh, material, chi, theta, adjoint, explicit=None) -> np.ndarray:
    """Pseudo-energy from a state and the solution of K w = dJ/dtheta.

    ``explicit`` adds the derivative taken at fixed temperature, if the cost
    depends on the design directly.
    """
    chi = as_element_chi(material, mesh, chi)
    gk, gr = gamma_factors(material, chi)
    xi = 2 * gk * pair_energy(mesh, material, theta, adjoint) - gr * source_energy(mesh, material, adjoint)
    if explicit is not None:
        xi = xi + explicit
    return np.where(mesh.active, xi, 0.0)


def source_sensitivity(mesh, material, chi, theta) -> np.ndarray:
    """(d f / d s)^T theta per unit volume, the explicit part of load-dependent costs."""
    chi = as_element_chi(material, mesh, chi)
    _, gr = gamma_factors(material, chi)
    return -gr * source_energy(mesh, material, theta)


# compliance ---------------------------------------------------------------


def eval_compliance(system: DiscreteSystem, theta1: np.ndarray) -> float:
    """Half the energy norm of the state, 1/2 theta^T K theta (convection included)."""
    return 0.5 * float(theta1 @ (system.K @ theta1))


def compliance_cost(system: DiscreteSystem, theta1: np.ndarray) -> float:
    """Negative total potential energy, f^T theta - 1/2 theta^T K theta.

    Equals the compliance when Dirichlet data are homogeneous; for
    temperature-driven problems it is minus the stored energy, so minimizing it
    maximizes the heat carried between the prescribed temperatures.
    """
    return float(system.f @ theta1) - eval_compliance(system, theta1)


def xi_compliance(mesh: Mesh, material: MaterialModel, chi, theta1: np.ndarray) -> np.ndarray:
    chi = as_element_chi(material, mesh, chi)
    gk, gr = gamma_factors(material, chi)
    xi = gk * pair_energy(mesh, material, theta1, theta1) - gr * source_energy(mesh, material, theta1)
    return np.where(mesh.active, xi, 0.0)


# flux cloaking ------------------------------------------------------------


def _deviation(mesh, material, chi, theta1, target, mask):
    q = heat_flux(mesh, material, chi, theta1)
    return (q - np.broadcast_to(target, q.shape)) * mask[:, None, None]


def eval_flux_cloak(mesh, material, chi, theta1, target, mask) -> float:
    """L2 norm of the flux deviation from ``target`` over the masked elements."""
    mask = np.asarray(mask, bool) & mesh.active
    if not mask.any():
        log.warning("flux cloaking mask is empty; cost is zero")
        return 0.0
    dev = _deviation(mesh, material, chi, theta1, target, mask)
    w = mesh.reference_basis.weights
    return math.sqrt(float(np.einsum("g,egi,egi->", w, dev, dev)))


def _flux_multiplier(mesh, material, chi, theta1, target, mask, j_value):
    if not j_value > 0:
        raise FunctionalError("flux cloaking adjoint is undefined for a zero cost")
    mask = np.asarray(mask, bool) & mesh.active
    return _deviation(mesh, material, chi, theta1, target, mask) / j_value


def adjoint_rhs_flux(mesh, material, chi, theta1, j_value, target, mask) -> np.ndarray:
    """Load -int B^T kappa_chi C1 for the flux-cloaking adjoint."""
    chi = as_element_chi(material, mesh, chi)
    c1 = _flux_multiplier(mesh, material, chi, theta1, target, mask, j_value)
    kappa = element_conductivity(mesh, material, chi)
    basis = mesh.reference_basis
    local = -np.einsum("g,gin,eij,egj->en", basis.weights, basis.B, kappa, c1)
    rhs = np.zeros(mesh.n_nodes)
    np.add.at(rhs, mesh.elements, local)
    return rhs


def xi_flux_cloak(mesh, material, chi, theta1, theta2, j_value, target, mask) -> np.ndarray:
    chi = as_element_chi(material, mesh, chi)
    gk, gr = gamma_factors(material, chi)
    c1 = _flux_multiplier(mesh, material, chi, theta1, target, mask, j_value)
    w = mesh.reference_basis.weights / mesh.element_volume
    kappa = material.element_kappa(mesh)
    flux_energy = np.einsum("g,egi,eij,egj->e", w, c1, kappa, gradients(mesh, theta1))
    coupled = pair_energy(mesh, material, theta1, theta2)
    xi = gk * (2 * coupled + flux_energy) - gr * source_energy(mesh, material, theta2)
    return np.where(mesh.active, xi, 0.0)


# port temperature ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PortOperators:
    """Integrals over the observation port: nodal masses, face mass matrix, measure."""

    mass_vector: np.ndarray
    mass_matrix: sp.csr_matrix
    measure: float

    @property
    def c2(self) -> float:
        return 1.0 / self.measure


def port_operators(mesh: Mesh, selector: FaceSelector) -> PortOperators:
    faces = np.flatnonzero(mesh.select_faces(selector))
    if not len(faces):
        raise FunctionalError("port selects no boundary face")
    ones = np.ones(len(faces))
    blocks, vector = boundary_face_operators(mesh, faces, ones)
    matrix = assembly_pattern(mesh).matrix(blocks)
    matrix.eliminate_zeros()
    return PortOperators(vector, matrix, float(vector.sum()))


def eval_temp_average(theta1: np.ndarray, port: PortOperators) -> float:
    return port.c2 * float(port.mass_vector @ theta1)


def eval_temp_variance(theta1: np.ndarray, port: PortOperators, j_av: float) -> float:
    dev = theta1 - j_av
    return port.c2 * float(dev @ (port.mass_matrix @ dev))


def adjoint_rhs_avg(port: PortOperators) -> np.ndarray:
    return -port.mass_vector


def adjoint_rhs_var(theta1: np.ndarray, port: PortOperators, j_av: float) -> np.ndarray:
    return -2.0 * (port.mass_matrix.T @ (theta1 - j_av))


def xi_temp_average(mesh, material, chi, theta1, theta2, port: PortOperators) -> np.ndarray:
    chi = as_element_chi(material, mesh, chi)
    gk, gr = gamma_factors(material, chi)
    c2 = port.c2
    xi = -2 * c2 * gk * pair_energy(mesh, material, theta1, theta2) + c2 * gr * source_energy(mesh, material, theta2)
    return np.where(mesh.active, xi, 0.0)


def xi_temp_variance(mesh, material, chi, theta1, theta2, theta3, port: PortOperators, j_av: float) -> np.ndarray:
    chi = as_element_chi(material, mesh, chi)
    gk, gr = gamma_factors(material, chi)
    c2 = c3 = port.c2
    overlap = float((theta1 - j_av) @ port.mass_vector)
    u12 = pair_energy(mesh, material, theta1, theta2)
    u13 = pair_energy(mesh, material, theta1, theta3)
    ur2 = source_energy(mesh, material, theta2)
    ur3 = source_energy(mesh, material, theta3)
    xi = (
        4 * c3 * c2 * overlap * gk * u12
        - 2 * c3 * c2 * overlap * gr * ur2
        - 2 * c3 * gk * u13
        + c3 * gr * ur3
    )
    return np.where(mesh.active, xi, 0.0)


@dataclass(frozen=True)
class Normalization:
    """Utopia and worst values of the two port objectives."""

    j_av_utopia: float = 0.0
    j_av_max: float = 1.0
    j_vr_utopia: float = 0.0
    j_vr_max: float = 1.0

    @property
    def c4(self) -> float:
        return _inverse_span(self.j_av_max, self.j_av_utopia, "average")

    @property
    def c5(self) -> float:
        return _inverse_span(self.j_vr_max, self.j_vr_utopia, "variance")


def _inverse_span(worst: float, best: float, name: str) -> float:
    span = worst - best
    value = 1.0 / span if span != 0 else math.inf
    if not math.isfinite(value):
        raise FunctionalError(f"degenerate {name} normalization: max equals utopia")
    return value


@dataclass(frozen=True)
class MultiWeights:
    omega: float
    c4: float
    c5: float

    def __post_init__(self):
        if not 0 <= self.omega <= 1:
            raise FunctionalError("omega must lie in [0, 1]")
        if not (math.isfinite(self.c4) and math.isfinite(self.c5)):
            raise FunctionalError("normalization constants must be finite")


def xi_temp_multi(mesh, material, chi, theta1, theta2, theta3, j_av, port, weights: MultiWeights) -> np.ndarray:
    xi_av = xi_temp_average(mesh, material, chi, theta1, theta2, port)
    xi_vr = xi_temp_variance(mesh, material, chi, theta1, theta2, theta3, port, j_av)
    return weights.omega * weights.c4 * xi_av + (1 - weights.omega) * weights.c5 * xi_vr


# problem-level evaluation -------------------------------------------------


@dataclass(eq=False)
class Evaluation:
    cost: float
    xi: np.ndarray | None
    states: dict[str, np.ndarray] = field(default_factory=dict)
    values: dict[str, float] = field(default_factory=dict)


class Compliance:
    kind = "compliance"

    def evaluate(self, mesh, material, chi, sensitivities=True, options: SolverOptions | None = None) -> Evaluation:
        system = assemble(mesh, material, chi, options)
        theta1 = solve(system)
        cost = compliance_cost(system, theta1)
        xi = xi_compliance(mesh, material, chi, theta1) if sensitivities else None
        return Evaluation(cost, xi, {"theta1": theta1}, {"compliance": eval_compliance(system, theta1)})


@dataclass(eq=False)
class FluxCloak:
    """Match a target heat flux over the masked elements."""

    target: np.ndarray  # (dim,) or (n_elements, n_gauss, dim)
    mask: np.ndarray
    kind: str = "flux_cloak"

    def evaluate(self, mesh, material, chi, sensitivities=True, options: SolverOptions | None = None) -> Evaluation:
        system = assemble(mesh, material, chi, options)
        theta1 = solve(system)
        cost = eval_flux_cloak(mesh, material, chi, theta1, self.target, self.mask)
        states = {"theta1": theta1}
        if not sensitivities:
            return Evaluation(cost, None, states)
        if cost == 0:
            log.warning("flux deviation vanishes: adjoint undefined, no update")
            return Evaluation(cost, None, states)
        rhs = adjoint_rhs_flux(mesh, material, chi, theta1, cost, self.target, self.mask)
        theta2 = solve(system, rhs)
        states["theta2"] = theta2
        xi = xi_flux_cloak(mesh, material, chi, theta1, theta2, cost, self.target, self.mask)
        return Evaluation(cost, xi, states)


@dataclass(eq=False)
class TemperatureCloak:
    """Weighted, normalized port average and variance of temperature."""

    port: PortOperators
    omega: float
    normalization: Normalization
    kind: str = "temp_multi"

    @property
    def weights(self) -> MultiWeights:
        return MultiWeights(self.omega, self.normalization.c4, self.normalization.c5)

    def scalarize(self, j_av: float, j_vr: float) -> float:
        w, n = self.weights, self.normalization
        return w.omega * w.c4 * (j_av - n.j_av_utopia) + (1 - w.omega) * w.c5 * (j_vr - n.j_vr_utopia)

    def evaluate(self, mesh, material, chi, sensitivities=True, options: SolverOptions | None = None) -> Evaluation:
        system = assemble(mesh, material, chi, options)
        theta1 = solve(system)
        j_av = eval_temp_average(theta1, self.port)
        j_vr = eval_temp_variance(theta1, self.port, j_av)
        states = {"theta1": theta1}
        values = {"j_av": j_av, "j_vr": j_vr}
        cost = self.scalarize(j_av, j_vr)
        if not sensitivities:
            return Evaluation(cost, None, states, values)
        theta2 = solve(system, adjoint_rhs_avg(self.port))
        theta3 = solve(system, adjoint_rhs_var(theta1, self.port, j_av))
        states.update(theta2=theta2, theta3=theta3)
        xi = xi_temp_multi(mesh, material, chi, theta1, theta2, theta3, j_av, self.port, self.weights)
        return Evaluation(cost, xi, states, values)
