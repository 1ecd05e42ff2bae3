"""Structured axis-aligned Q1 meshes with region labels and boundary tags."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial.transform import Rotation

SHAPES = ("box", "sphere", "ellipsoid")
BC_KINDS = ("dirichlet", "flux", "convection", "adiabatic")
AXIS_NAMES = ("x", "y", "z")

ADIABATIC = -1


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Region:
    """Geometric primitive selecting elements by centroid inclusion.

    ``size`` holds full extents for boxes and diameters for spheres and
    ellipsoids (a sphere takes a single diameter). ``rotation_deg`` is a
    rotation about z in 2D, or intrinsic x-y-z Euler angles in 3D.
    Void regions are removed from the analysis domain.
    """

    name: str
    shape: str
    center: tuple[float, ...]
    size: tuple[float, ...]
    rotation_deg: tuple[float, ...] = ()
    void: bool = False

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise MeshError(f"region {self.name!r}: unknown shape {self.shape!r}")
        if any(s < 0 for s in self.size):
            raise MeshError(f"region {self.name!r}: negative size")

    def contains(self, points: np.ndarray) -> np.ndarray:
        dim = points.shape[1]
        center = np.asarray(self.center, float)
        if center.shape != (dim,):
            raise MeshError(f"region {self.name!r}: center must have {dim} entries")
        size = np.asarray(self.size, float)
        if self.shape == "sphere":
            size = np.full(dim, size[0] if size.size else 0.0)
        elif size.shape != (dim,):
            raise MeshError(f"region {self.name!r}: size must have {dim} entries")
        if np.any(size == 0):
            return np.zeros(len(points), bool)
        local = (points - center) @ _rotation_matrix(self.rotation_deg, dim)
        half = size / 2
        if self.shape == "box":
            return np.all(np.abs(local) <= half * (1 + 1e-12), axis=1)
        return np.sum((local / half) ** 2, axis=1) <= 1 + 1e-12


def _rotation_matrix(angles: tuple[float, ...], dim: int) -> np.ndarray:
    if not angles or not any(angles):
        return np.eye(dim)
    if dim == 2:
        a = np.deg2rad(angles[-1])
        return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return Rotation.from_euler("xyz", angles, degrees=True).as_matrix()


@dataclass(frozen=True)
class Patch:
    """In-plane subset of a boundary plane: a disc or an axis-aligned rectangle.

    Coordinates are full points; the component along the face normal is ignored.
    """

    shape: str
    center: tuple[float, ...]
    radius: float = 0.0
    size: tuple[float, ...] = ()

    def __post_init__(self):
        if self.shape not in ("disc", "rect"):
            raise MeshError(f"unknown patch shape {self.shape!r}")

    def contains(self, points: np.ndarray, axis: int) -> np.ndarray:
        keep = [i for i in range(points.shape[1]) if i != axis]
        d = points[:, keep] - np.asarray(self.center, float)[keep]
        if self.shape == "disc":
            return np.sum(d**2, axis=1) <= self.radius**2 * (1 + 1e-12)
        half = np.asarray(self.size, float)[keep] / 2
        return np.all(np.abs(d) <= half * (1 + 1e-12), axis=1)


@dataclass(frozen=True)
class FaceSelector:
    axis: int
    side: int
    patch: Patch | None = None


@dataclass(frozen=True)
class BoundaryCondition:
    """Thermal condition: prescribed temperature, normal flux or convection."""

    kind: str
    value: float = 0.0
    h: float = 0.0
    ambient: float = 0.0

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise MeshError(f"unknown boundary condition {self.kind!r}")


@dataclass(frozen=True)
class BoundaryEntry:
    """A condition applied to selected exterior faces, or to every node of a region."""

    condition: BoundaryCondition
    selector: FaceSelector | None = None
    region: str | None = None

    def __post_init__(self):
        if (self.selector is None) == (self.region is None):
            raise MeshError("boundary entry needs exactly one of selector or region")
        if self.region is not None and self.condition.kind != "dirichlet":
            raise MeshError("only dirichlet conditions can be applied to regions")


@dataclass(frozen=True)
class ElementBasis:
    """Q1 shape functions and gradients at the Gauss points of one element."""

    points: np.ndarray  # (n_gauss, dim) physical coordinates
    N: np.ndarray  # (n_gauss, n_nodes)
    B: np.ndarray  # (n_gauss, dim, n_nodes)
    weights: np.ndarray  # (n_gauss,)


def _local_corners(dim: int) -> np.ndarray:
    """Counter-clockwise corner ordering per layer (VTK quad / hexahedron)."""
    square = [(0, 0), (1, 0), (1, 1), (0, 1)]
    if dim == 2:
        return np.array(square)
    return np.array([(a, b, c) for c in (0, 1) for a, b in square])


def _reference_basis(dim: int, local: np.ndarray, spacing: np.ndarray):
    """Shape values and physical gradients at given reference points in [0,1]^dim."""
    corners = _local_corners(dim)
    n = len(local)
    one_d = np.where(corners[None, :, :] == 1, local[:, None, :], 1 - local[:, None, :])
    N = np.prod(one_d, axis=2)
    B = np.empty((n, dim, len(corners)))
    sign = np.where(corners == 1, 1.0, -1.0)
    for a in range(dim):
        others = np.prod(np.delete(one_d, a, axis=2), axis=2)
        B[:, a, :] = sign[None, :, a] * others / spacing[a]
    return N, B


def gauss_points_unit(dim: int, order: int = 2):
    x, w = np.polynomial.legendre.leggauss(order)
    x = (x + 1) / 2
    w = w / 2
    pts = np.array(list(itertools.product(x, repeat=dim)))[:, ::-1]
    wts = np.prod(np.array(list(itertools.product(w, repeat=dim))), axis=1)
    return pts, wts


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform grid of Q1 elements.

    Nodes and elements are numbered lexicographically with x fastest.
    ``boundary_faces`` rows are (element, local face) where the local face is
    ``2 * axis + side``; ``face_tags`` indexes ``conditions`` or is -1 for
    adiabatic faces.
    """

    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    region_names: tuple[str, ...]
    region: np.ndarray
    active: np.ndarray
    boundary_faces: np.ndarray
    face_tags: np.ndarray
    conditions: tuple[BoundaryCondition, ...]
    dirichlet_nodes: np.ndarray
    dirichlet_values: np.ndarray
    origin: tuple[float, ...] = field(default=())

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.dims))

    @property
    def node_dims(self) -> tuple[int, ...]:
        return tuple(n + 1 for n in self.dims)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_dims))

    @property
    def element_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def element_size(self) -> float:
        return float(max(self.spacing))

    @cached_property
    def node_coords(self) -> np.ndarray:
        axes = [o + h * np.arange(n) for o, h, n in zip(self._origin, self.spacing, self.node_dims)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel(order="F") for g in grid], axis=1)

    @property
    def _origin(self) -> tuple[float, ...]:
        return self.origin or (0.0,) * self.dim

    @cached_property
    def element_index(self) -> np.ndarray:
        """Integer lattice position (i, j[, k]) of every element."""
        idx = np.unravel_index(np.arange(self.n_elements), self.dims, order="F")
        return np.stack(idx, axis=1)

    @cached_property
    def elements(self) -> np.ndarray:
        corners = _local_corners(self.dim)
        lattice = self.element_index[:, None, :] + corners[None, :, :]
        return np.ravel_multi_index(tuple(lattice.transpose(2, 0, 1)), self.node_dims, order="F")

    @cached_property
    def centroids(self) -> np.ndarray:
        return np.asarray(self._origin) + (self.element_index + 0.5) * np.asarray(self.spacing)

    @cached_property
    def reference_basis(self) -> ElementBasis:
        """Basis of the element at the origin; every element is a translate of it."""
        local, w = gauss_points_unit(self.dim)
        spacing = np.asarray(self.spacing, float)
        N, B = _reference_basis(self.dim, local, spacing)
        return ElementBasis(local * spacing, N, B, w * self.element_volume)

    def face_basis(self, local_face: int, order: int = 2):
        """Shape values and weights at Gauss points of one element face."""
        axis, side = divmod(local_face, 2)
        pts, w = gauss_points_unit(self.dim - 1, order)
        local = np.insert(pts, axis, float(side), axis=1)
        N, _ = _reference_basis(self.dim, local, np.asarray(self.spacing, float))
        area = float(np.prod(np.delete(np.asarray(self.spacing), axis)))
        return N, w * area

    @cached_property
    def boundary_face_centroids(self) -> np.ndarray:
        axis, side = np.divmod(self.boundary_faces[:, 1], 2)
        c = self.centroids[self.boundary_faces[:, 0]].copy()
        rows = np.arange(len(c))
        c[rows, axis] += (side - 0.5) * np.asarray(self.spacing)[axis]
        return c

    def face_nodes(self, faces: np.ndarray) -> np.ndarray:
        """Global node ids of boundary faces given as (element, local face) rows."""
        corners = _local_corners(self.dim)
        out = []
        for element, local_face in faces:
            axis, side = divmod(int(local_face), 2)
            out.append(self.elements[element][corners[:, axis] == side])
        return np.array(out, dtype=int).reshape(len(faces), 2 ** (self.dim - 1))

    @cached_property
    def node_active(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, bool)
        mask[self.elements[self.active].ravel()] = True
        return mask

    def region_id(self, name: str) -> int:
        try:
            return self.region_names.index(name)
        except ValueError:
            raise MeshError(f"unknown region {name!r}") from None

    def select_faces(self, selector: FaceSelector) -> np.ndarray:
        """Boolean mask over boundary faces matched by a selector."""
        axis, side = np.divmod(self.boundary_faces[:, 1], 2)
        mask = (axis == selector.axis) & (side == selector.side)
        mask &= self.active[self.boundary_faces[:, 0]]
        if selector.patch is not None:
            mask &= selector.patch.contains(self.boundary_face_centroids, selector.axis)
        return mask

    @property
    def total_volume(self) -> float:
        return float(np.count_nonzero(self.active)) * self.element_volume


def element_basis(mesh: Mesh, element: int) -> ElementBasis:
    if not 0 <= element < mesh.n_elements:
        raise IndexError(f"element {element} out of range")
    ref = mesh.reference_basis
    offset = mesh.node_coords[mesh.elements[element][0]]
    return ElementBasis(ref.points + offset, ref.N, ref.B, ref.weights)


def _exterior_faces(dims: tuple[int, ...]) -> np.ndarray:
    idx = np.stack(np.unravel_index(np.arange(int(np.prod(dims))), dims, order="F"), axis=1)
    rows = []
    for axis in range(len(dims)):
        for side in (0, 1):
            edge = 0 if side == 0 else dims[axis] - 1
            elems = np.flatnonzero(idx[:, axis] == edge)
            rows.append(np.column_stack([elems, np.full(len(elems), 2 * axis + side)]))
    return np.concatenate(rows).astype(int)


def build_structured_mesh(
    dims,
    spacing,
    regions=(),
    boundary=(),
    background: str = "domain",
    origin=None,
) -> Mesh:
    """Build a mesh; later regions take priority over earlier ones.

    Region 0 is the background and holds every element not claimed by a region.
    Faces matched by several boundary entries take the last one, except that two
    Dirichlet entries with different values on a shared face or node are an error.
    """
    dims = tuple(int(n) for n in dims)
    spacing = tuple(float(h) for h in spacing)
    if len(dims) not in (2, 3):
        raise MeshError("dims must have 2 or 3 entries")
    if any(n < 1 for n in dims):
        raise MeshError("all dims must be >= 1")
    if len(spacing) != len(dims) or any(not h > 0 for h in spacing):
        raise MeshError("spacing must be positive with one entry per axis")
    names = [background] + [r.name for r in regions]
    if len(set(names)) != len(names):
        raise MeshError("region names must be unique")

    skeleton = Mesh(
        dims, spacing, tuple(names), np.zeros(0, int), np.zeros(0, bool),
        np.zeros((0, 2), int), np.zeros(0, int), (), np.zeros(0, int), np.zeros(0),
        tuple(origin) if origin is not None else (),
    )
    region = np.zeros(skeleton.n_elements, int)
    active = np.ones(skeleton.n_elements, bool)
    for rid, r in enumerate(regions, start=1):
        inside = r.contains(skeleton.centroids)
        region[inside] = rid
    for rid, r in enumerate(regions, start=1):
        if r.void:
            active[region == rid] = False

    faces = _exterior_faces(dims)
    partial = Mesh(
        dims, spacing, tuple(names), region, active, faces,
        np.full(len(faces), ADIABATIC), (), np.zeros(0, int), np.zeros(0), skeleton.origin,
    )

    conditions: list[BoundaryCondition] = []
    tags = np.full(len(faces), ADIABATIC)
    node_value: dict[int, float] = {}
    face_dirichlet = np.full(len(faces), np.nan)
    region_nodes: list[tuple[np.ndarray, float]] = []
    for entry in boundary:
        cond = entry.condition
        if entry.region is not None:
            rid = partial.region_id(entry.region)
            members = (region == rid) & active
            region_nodes.append((np.unique(partial.elements[members]), cond.value))
            continue
        sel = entry.selector
        if not (0 <= sel.axis < len(dims)) or sel.side not in (0, 1):
            raise MeshError(f"invalid face selector {sel}")
        mask = partial.select_faces(sel)
        if cond.kind == "dirichlet":
            clash = mask & ~np.isnan(face_dirichlet) & (face_dirichlet != cond.value)
            if clash.any():
                raise MeshError("conflicting dirichlet values on a shared face")
            face_dirichlet[mask] = cond.value
        else:
            face_dirichlet[mask] = np.nan
        if cond.kind == "adiabatic":
            tags[mask] = ADIABATIC
        else:
            tags[mask] = len(conditions)
        conditions.append(cond)

    dirichlet_faces = np.flatnonzero(~np.isnan(face_dirichlet))
    groups = [(partial.face_nodes(faces[dirichlet_faces[face_dirichlet[dirichlet_faces] == v]]).ravel(), v)
              for v in np.unique(face_dirichlet[dirichlet_faces])]
    for nodes, value in groups + region_nodes:
        for n in np.unique(nodes):
            old = node_value.setdefault(int(n), float(value))
            if old != value:
                raise MeshError(f"conflicting dirichlet values at node {int(n)}")
    d_nodes = np.array(sorted(node_value), dtype=int)
    d_values = np.array([node_value[n] for n in d_nodes], dtype=float)

    return Mesh(
        dims, spacing, tuple(names), region, active, faces, tags, tuple(conditions),
        d_nodes, d_values, skeleton.origin,
    )
