"""Screened-Laplacian smoothing of element fields onto nodes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import RESIDUAL_TOL, SolverError, assembly_pattern, reference_load, reference_stiffness
from .mesh import Mesh


@dataclass(frozen=True)
class SmootherConfig:
    """``tau`` scales the smoothing length to the element size: epsilon = tau * h."""

    tau: float = 1.0

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be non-negative")

    def epsilon(self, mesh: Mesh) -> float:
        return self.tau * mesh.element_size


class Smoother:
    """Solves (M + eps^2 K) xi_hat = int N^T xi with zero-flux boundaries.

    M is the row-sum lumped mass, which keeps the operator an M-matrix on
    near-cubic grids, so smoothed values stay within the input range. The
    operator depends only on the mesh and is factorized once.
    """

    def __init__(self, mesh: Mesh, config: SmootherConfig = SmootherConfig()):
        self.mesh = mesh
        self.config = config
        self.epsilon = config.epsilon(mesh)
        active = mesh.active.astype(float)
        load = reference_load(mesh)
        lumped = np.zeros(mesh.n_nodes)
        np.add.at(lumped, mesh.elements, active[:, None] * load[None, :])
        laplace = np.einsum("iiab->ab", reference_stiffness(mesh))
        blocks = (self.epsilon**2 * active)[:, None, None] * laplace[None]
        G = assembly_pattern(mesh).matrix(blocks) + sp.diags(lumped)
        idle = ~mesh.node_active
        G = G + sp.diags(idle.astype(float))
        self.lumped_mass = lumped
        self.operator = G.tocsc()
        self._lu = spla.splu(self.operator, permc_spec="MMD_AT_PLUS_A", options=dict(SymmetricMode=True))

    def load(self, field: np.ndarray) -> np.ndarray:
        values = np.where(self.mesh.active, np.asarray(field, float), 0.0)
        rhs = np.zeros(self.mesh.n_nodes)
        np.add.at(rhs, self.mesh.elements, values[:, None] * reference_load(self.mesh)[None, :])
        return rhs

    def smooth(self, field: np.ndarray) -> np.ndarray:
        """Nodal field from element values; nodes outside the active domain get 0."""
        rhs = self.load(field)
        x = self._lu.solve(rhs)
        norm = np.linalg.norm(rhs)
        if norm > 0:
            res = np.linalg.norm(self.operator @ x - rhs) / norm
            if res > RESIDUAL_TOL:
                x = x + self._lu.solve(rhs - self.operator @ x)
                res = np.linalg.norm(self.operator @ x - rhs) / norm
                if res > RESIDUAL_TOL:
                    raise SolverError(f"smoothing residual {res:.3e}")
        return x

    def integral(self, nodal: np.ndarray) -> float:
        """Domain integral of a nodal field."""
        return float(self.lumped_mass @ nodal)
