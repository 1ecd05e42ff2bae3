"""Turn a validated ProblemConfig into mesh, material, functional and optimizer objects."""

from __future__ import annotations

import numpy as np

from .config import FaceConfig, NormalizationConfig, ProblemConfig
from .fem import assemble, heat_flux, solve
from .functionals import Compliance, FluxCloak, Normalization, TemperatureCloak, port_operators
from .material import MaterialModel, RegionMaterial
from .mesh import AXIS_NAMES, BoundaryCondition, BoundaryEntry, FaceSelector, Mesh, Patch, Region, build_structured_mesh
from .optimizer import OptimizerConfig, Problem
from .smoothing import SmootherConfig


def face_selector(face: FaceConfig) -> FaceSelector:
    axis_name, side = face.face.split("-")
    patch = None
    if face.patch is not None:
        p = face.patch
        patch = Patch(p.shape, p.center, p.radius, p.size)
    return FaceSelector(AXIS_NAMES.index(axis_name), 0 if side == "min" else 1, patch)


def build_mesh(cfg: ProblemConfig) -> Mesh:
    regions = [Region(r.name, r.shape, r.center, r.size, r.rotation_deg, r.void) for r in cfg.mesh.regions]
    boundary = []
    for bc in cfg.boundary:
        condition = BoundaryCondition(bc.type, bc.value, bc.h, bc.ambient)
        if bc.face is not None:
            boundary.append(BoundaryEntry(condition, selector=face_selector(bc.face)))
        else:
            boundary.append(BoundaryEntry(condition, region=bc.region))
    return build_structured_mesh(cfg.mesh.dims, cfg.mesh.spacing, regions, boundary, cfg.mesh.background)


def build_material(cfg: ProblemConfig, mesh: Mesh) -> MaterialModel:
    props = dict(cfg.material.regions)
    regions = []
    for name in mesh.region_names:
        p = props[name]
        if isinstance(p.kappa, tuple):
            regions.append(RegionMaterial(np.array(p.kappa, float), p.source, p.optimizable))
        else:
            regions.append(RegionMaterial.isotropic(p.kappa, mesh.dim, p.source, p.optimizable))
    m = cfg.material
    return MaterialModel(tuple(regions), m.m_kappa, m.alpha_kappa, m.m_r, m.alpha_r)


def homogeneous_flux(mesh: Mesh, material: MaterialModel) -> np.ndarray:
    """Gauss-point flux of the all-background design, used as the cloaking target."""
    background = material.regions[0]
    uniform = MaterialModel(
        (background,) * len(material.regions),
        material.m_kappa, material.alpha_kappa, material.m_r, material.alpha_r,
    )
    hard = np.ones(mesh.n_elements, bool)
    theta = solve(assemble(mesh, uniform, hard))
    return heat_flux(mesh, uniform, hard, theta)


def region_mask(mesh: Mesh, names) -> np.ndarray:
    ids = [mesh.region_id(name) for name in names]
    return np.isin(mesh.region, ids) & mesh.active


def to_normalization(norm: NormalizationConfig | None) -> Normalization | None:
    if norm is None:
        return None
    return Normalization(norm.j_av_utopia, norm.j_av_max, norm.j_vr_utopia, norm.j_vr_max)


def build_functional(cfg: ProblemConfig, mesh: Mesh, material: MaterialModel, normalization=None, omega=None):
    fn = cfg.functional
    if fn.kind == "compliance":
        return Compliance()
    if fn.kind == "flux_cloak":
        if fn.target_from_homogeneous:
            target = homogeneous_flux(mesh, material)
        else:
            target = np.asarray(fn.target_flux, float)
        mask = region_mask(mesh, fn.mask_regions) if fn.mask_regions else mesh.active.copy()
        return FluxCloak(target, mask)
    port = port_operators(mesh, face_selector(fn.port))
    norm = normalization or to_normalization(fn.normalization) or Normalization()
    return TemperatureCloak(port, fn.omega if omega is None else omega, norm)


def optimizer_config(cfg: ProblemConfig) -> OptimizerConfig:
    o = cfg.optimizer
    return OptimizerConfig(
        o.grid(), o.t_start, o.tol_chi, o.tol_lambda, o.tol_constraint, o.max_outer_iters, o.max_bisection_iters
    )


def build_problem(cfg: ProblemConfig, normalization: Normalization | None = None, omega: float | None = None,
                  mesh: Mesh | None = None) -> Problem:
    mesh = mesh or build_mesh(cfg)
    material = build_material(cfg, mesh)
    functional = build_functional(cfg, mesh, material, normalization, omega)
    return Problem(mesh, material, functional, optimizer_config(cfg), SmootherConfig(cfg.optimizer.tau))
