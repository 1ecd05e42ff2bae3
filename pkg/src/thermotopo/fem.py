"""Assembly and solution of the steady heat-conduction system."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .material import ElementChi, MaterialModel, as_element_chi
from .mesh import ADIABATIC, Mesh

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    direct_limit: int = 200_000
    cg_rtol: float = 1e-12
    cg_maxiter: int = 20_000


@dataclass(frozen=True, eq=False)
class AssemblyPattern:
    """Sparsity pattern shared by every operator assembled on a mesh."""

    indptr: np.ndarray
    indices: np.ndarray
    slots: np.ndarray  # (n_elements, n_nodes_el, n_nodes_el) positions in the CSR data
    shape: tuple[int, int]

    def matrix(self, element_blocks: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.slots.ravel(), weights=element_blocks.ravel(), minlength=len(self.indices))
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


@lru_cache(maxsize=16)
def assembly_pattern(mesh: Mesh) -> AssemblyPattern:
    el = mesh.elements
    n = mesh.n_nodes
    rows = np.repeat(el[:, :, None], el.shape[1], axis=2).ravel()
    cols = np.repeat(el[:, None, :], el.shape[1], axis=1).ravel()
    skeleton = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    skeleton.sum_duplicates()
    skeleton.sort_indices()
    keys = np.repeat(np.arange(n, dtype=np.int64), np.diff(skeleton.indptr)) * n + skeleton.indices
    slots = np.searchsorted(keys, rows.astype(np.int64) * n + cols).reshape(el.shape[0], el.shape[1], el.shape[1])
    return AssemblyPattern(skeleton.indptr, skeleton.indices, slots, (n, n))


@lru_cache(maxsize=16)
def reference_stiffness(mesh: Mesh) -> np.ndarray:
    """Element integrals of B_i^T B_j for each pair of axes, shape (dim, dim, n, n)."""
    basis = mesh.reference_basis
    return np.einsum("g,gia,gjb->ijab", basis.weights, basis.B, basis.B)


@lru_cache(maxsize=16)
def reference_mass(mesh: Mesh) -> np.ndarray:
    basis = mesh.reference_basis
    return np.einsum("g,ga,gb->ab", basis.weights, basis.N, basis.N)


def reference_load(mesh: Mesh) -> np.ndarray:
    """Integral of each shape function over one element."""
    basis = mesh.reference_basis
    return basis.weights @ basis.N


def face_matrices(mesh: Mesh, local_face: int) -> tuple[np.ndarray, np.ndarray]:
    """Face mass matrix and face load vector of one local face, in element numbering."""
    N, w = mesh.face_basis(local_face)
    return np.einsum("g,ga,gb->ab", w, N, N), w @ N


def element_stiffness(mesh: Mesh, kappa: np.ndarray) -> np.ndarray:
    """Element matrices for per-element conductivity tensors (n_elements, dim, dim)."""
    return np.einsum("eij,ijab->eab", kappa, reference_stiffness(mesh))


def boundary_face_operators(mesh: Mesh, faces: np.ndarray, coefficient: np.ndarray):
    """Sum of coefficient-weighted face mass matrices and face loads over selected faces.

    ``coefficient`` holds one value per entry of ``faces``. Returns the (n_elements, n, n) block array and the nodal load vector.
    """
    n_loc = mesh.elements.shape[1]
    blocks = np.zeros((mesh.n_elements, n_loc, n_loc))
    load = np.zeros(mesh.n_nodes)
    coefficient = np.broadcast_to(np.asarray(coefficient, float), faces.shape)
    local_faces = mesh.boundary_faces[faces, 1]
    for local_face in np.unique(local_faces):
        pick = local_faces == local_face
        mass, vec = face_matrices(mesh, int(local_face))
        elems = mesh.boundary_faces[faces[pick], 0]
        c = coefficient[pick]
        np.add.at(blocks, elems, c[:, None, None] * mass)
        np.add.at(load, mesh.elements[elems], c[:, None] * vec)
    return blocks, load


@dataclass(eq=False)
class DiscreteSystem:
    """Global operator and load with the Dirichlet partition.

    Fixed nodes are Dirichlet nodes plus nodes touching no active element; the
    latter are held at zero.
    """

    K: sp.csr_matrix
    f: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    options: SolverOptions = field(default_factory=SolverOptions)
    _solver: object = field(default=None, repr=False)

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed)

    def reduced(self) -> sp.csr_matrix:
        free = self.free
        return self.K[free][:, free]

    def _factor(self):
        if self._solver is None:
            A = self.reduced().tocsc()
            if A.shape[0] == 0:
                self._solver = lambda b: b
            elif A.shape[0] <= self.options.direct_limit:
                lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", options=dict(SymmetricMode=True))
                self._solver = lu.solve
            else:
                self._solver = _jacobi_cg(A.tocsr(), self.options)
        return self._solver


def _jacobi_cg(A: sp.csr_matrix, options: SolverOptions):
    inv_diag = 1.0 / A.diagonal()
    M = spla.LinearOperator(A.shape, matvec=lambda x: inv_diag * x)

    def solve(b):
        x, info = spla.cg(A, b, rtol=options.cg_rtol, maxiter=options.cg_maxiter, M=M)
        if info != 0:
            res = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
            raise SolverError(f"conjugate gradient stopped after {info} iterations, residual {res:.3e}")
        return x

    return solve


def assemble(mesh: Mesh, material: MaterialModel, chi, options: SolverOptions | None = None) -> DiscreteSystem:
    """Assemble K and f for a design.

    ``chi`` is either a boolean hard-flag array or an ``ElementChi``.
    """
    material.check_mesh(mesh)
    chi = as_element_chi(material, mesh, chi)
    tags = mesh.face_tags
    tagged = np.flatnonzero(tags != ADIABATIC)
    kinds = np.array([mesh.conditions[t].kind for t in tags[tagged]], dtype=object)
    conv = tagged[kinds == "convection"]
    flux = tagged[kinds == "flux"]
    if len(mesh.dirichlet_nodes) == 0 and len(conv) == 0:
        raise SingularSystemError("no dirichlet node and no convection face: the system is singular")

    kappa = element_conductivity(mesh, material, chi)
    blocks = element_stiffness(mesh, kappa)

    f = np.zeros(mesh.n_nodes)
    source = material.element_source(mesh) * chi.source**material.m_r * mesh.active
    np.add.at(f, mesh.elements, source[:, None] * reference_load(mesh)[None, :])

    if len(conv):
        h = np.array([mesh.conditions[t].h for t in tags[conv]])
        amb = np.array([mesh.conditions[t].ambient for t in tags[conv]])
        face_blocks, _ = boundary_face_operators(mesh, conv, h)
        _, face_load = boundary_face_operators(mesh, conv, h * amb)
        blocks = blocks + face_blocks
        f += face_load
    if len(flux):
        qbar = np.array([mesh.conditions[t].value for t in tags[flux]])
        _, face_load = boundary_face_operators(mesh, flux, qbar)
        f -= face_load

    K = assembly_pattern(mesh).matrix(blocks)
    idle = ~mesh.node_active
    if idle.any():
        K = K + sp.diags(idle.astype(float), format="csr")
    fixed = idle.copy()
    fixed[mesh.dirichlet_nodes] = True
    values = np.zeros(mesh.n_nodes)
    values[mesh.dirichlet_nodes] = mesh.dirichlet_values
    return DiscreteSystem(K, f, fixed, values, options or SolverOptions())


def element_conductivity(mesh: Mesh, material: MaterialModel, chi: ElementChi) -> np.ndarray:
    """Interpolated conductivity tensor per element; inactive elements get zero."""
    scale = chi.kappa**material.m_kappa * mesh.active
    return material.element_kappa(mesh) * scale[:, None, None]


def solve(system: DiscreteSystem, rhs: np.ndarray | None = None) -> np.ndarray:
    """Solve the state (``rhs=None``) or an adjoint system with homogeneous Dirichlet data.

    Every right-hand side reuses one factorization of the reduced operator.
    """
    free = system.free
    theta = np.zeros(system.K.shape[0])
    if rhs is None:
        theta[system.fixed] = system.fixed_values[system.fixed]
        b = system.f[free] - system.K[free] @ theta
    else:
        b = np.asarray(rhs, float)[free]
    if not len(free):
        return theta
    norm_b = np.linalg.norm(b)
    if norm_b == 0:
        return theta
    solver = system._factor()
    x = solver(b)
    A = None
    for _ in range(3):
        if A is None:
            A = system.reduced()
        r = b - A @ x
        res = np.linalg.norm(r) / norm_b
        if res <= RESIDUAL_TOL:
            break
        x = x + solver(r)
    else:
        res = np.linalg.norm(b - A @ x) / norm_b
        if not np.isfinite(res) or res > RESIDUAL_TOL:
            raise SolverError(f"linear solve residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
    theta[free] = x
    return theta


def gradients(mesh: Mesh, theta: np.ndarray) -> np.ndarray:
    """Temperature gradient at every Gauss point, shape (n_elements, n_gauss, dim)."""
    return np.einsum("gdn,en->egd", mesh.reference_basis.B, theta[mesh.elements])


def heat_flux(mesh: Mesh, material: MaterialModel, chi, theta: np.ndarray, element: int | None = None) -> np.ndarray:
    """q = -kappa_chi grad(theta) at Gauss points, for one element or all of them."""
    chi = as_element_chi(material, mesh, chi)
    kappa = element_conductivity(mesh, material, chi)
    q = -np.einsum("eij,egj->egi", kappa, gradients(mesh, theta))
    return q if element is None else q[element]
