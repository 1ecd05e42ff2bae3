"""Bi-material interpolation of conductivity and heat source."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh


class MaterialError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RegionMaterial:
    kappa: np.ndarray  # (dim, dim) reference conductivity, W/(K m)
    source: float = 0.0  # W/m^3
    optimizable: bool = True

    @classmethod
    def isotropic(cls, kappa: float, dim: int, source: float = 0.0, optimizable: bool = True):
        return cls(kappa * np.eye(dim), source, optimizable)


@dataclass(frozen=True, eq=False)
class MaterialModel:
    """Reference properties per region plus the hard/soft contrast.

    The soft phase carries ``alpha * reference``; ``beta = alpha ** (1 / m)``
    is the lower value of the relaxed characteristic function.
    """

    regions: tuple[RegionMaterial, ...]
    m_kappa: float = 5.0
    alpha_kappa: float = 1e-3
    m_r: float = 1.0
    alpha_r: float = 1e-3

    def __post_init__(self):
        if self.m_kappa < 1 or self.m_r < 1:
            raise MaterialError("interpolation exponents must be >= 1")
        if not (0 < self.alpha_kappa < 1):
            raise MaterialError("alpha_kappa must lie in (0, 1)")
        if not (0 < self.alpha_r <= 1):
            raise MaterialError("alpha_r must lie in (0, 1]")
        for i, reg in enumerate(self.regions):
            k = np.asarray(reg.kappa, float)
            if not np.allclose(k, k.T) or np.any(np.linalg.eigvalsh(k) <= 0):
                raise MaterialError(f"region {i}: conductivity must be symmetric positive definite")

    @property
    def beta_kappa(self) -> float:
        return self.alpha_kappa ** (1.0 / self.m_kappa)

    @property
    def beta_r(self) -> float:
        return self.alpha_r ** (1.0 / self.m_r)

    def check_mesh(self, mesh: Mesh) -> None:
        if len(self.regions) != len(mesh.region_names):
            raise MaterialError(
                f"material defines {len(self.regions)} regions, mesh has {len(mesh.region_names)}"
            )
        for i, reg in enumerate(self.regions):
            if np.shape(reg.kappa) != (mesh.dim, mesh.dim):
                raise MaterialError(f"region {mesh.region_names[i]!r}: conductivity must be {mesh.dim}x{mesh.dim}")

    def element_kappa(self, mesh: Mesh) -> np.ndarray:
        """Reference conductivity tensor per element, shape (n_elements, dim, dim)."""
        table = np.stack([np.asarray(r.kappa, float) for r in self.regions])
        return table[mesh.region]

    def element_source(self, mesh: Mesh) -> np.ndarray:
        return np.array([r.source for r in self.regions], float)[mesh.region]

    def optimizable(self, mesh: Mesh) -> np.ndarray:
        """Elements whose phase can change: active and in an optimizable region."""
        flags = np.array([r.optimizable for r in self.regions], bool)[mesh.region]
        return flags & mesh.active


@dataclass(frozen=True, eq=False)
class ElementChi:
    """Relaxed characteristic values per element for conductivity and source.

    Binary designs take values in {beta, 1}; sensitivity checks perturb them
    continuously.
    """

    kappa: np.ndarray
    source: np.ndarray


def relaxed_heaviside(x, beta: float):
    """1 where x >= 0, beta where x < 0."""
    return np.where(np.asarray(x) >= 0, 1.0, beta)


def exchange_function(hard, beta: float):
    """Signed change of chi when an element swaps phase."""
    return np.where(np.asarray(hard, bool), -(1.0 - beta), 1.0 - beta)


def relaxed_chi(material: MaterialModel, mesh: Mesh, hard: np.ndarray) -> ElementChi:
    hard = np.asarray(hard, bool) | ~material.optimizable(mesh)
    return ElementChi(
        np.where(hard, 1.0, material.beta_kappa),
        np.where(hard, 1.0, material.beta_r),
    )


def as_element_chi(material: MaterialModel, mesh: Mesh, chi) -> ElementChi:
    if isinstance(chi, ElementChi):
        return chi
    return relaxed_chi(material, mesh, chi)


def interpolate_conductivity(material: MaterialModel, region: int, hard: bool) -> np.ndarray:
    reg = material.regions[region]
    kappa = np.asarray(reg.kappa, float)
    if hard or not reg.optimizable:
        return kappa
    return material.beta_kappa**material.m_kappa * kappa


def interpolate_heat_source(material: MaterialModel, region: int, hard: bool) -> float:
    reg = material.regions[region]
    if hard or not reg.optimizable:
        return reg.source
    return material.beta_r**material.m_r * reg.source


def centroid_values(mesh: Mesh, nodal: np.ndarray) -> np.ndarray:
    """Q1 interpolant at element centroids, i.e. the mean of the corner values."""
    return np.asarray(nodal)[mesh.elements].mean(axis=1)


def chi_from_psi(mesh: Mesh, material: MaterialModel, psi: np.ndarray) -> np.ndarray:
    """Hard flags from the sign of psi at element centroids; frozen elements stay hard."""
    hard = centroid_values(mesh, psi) >= 0
    hard[~material.optimizable(mesh)] = True
    return hard
