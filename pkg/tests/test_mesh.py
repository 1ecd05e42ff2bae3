import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermotopo.mesh import (
    ADIABATIC,
    MeshError,
    Patch,
    Region,
    build_structured_mesh,
    element_basis,
)

from conftest import convection, dirichlet

dims_2d = st.tuples(st.integers(1, 5), st.integers(1, 5))
dims_3d = st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
spacing = st.floats(0.05, 3.0)


def test_two_by_two_lattice_counts():
    mesh = build_structured_mesh((2, 2), (0.5, 0.5))
    assert mesh.n_elements == 4
    assert mesh.n_nodes == 9
    assert len(mesh.boundary_faces) == 8
    assert np.all(mesh.face_tags == ADIABATIC)
    assert np.all(mesh.region == 0)


def test_unit_cube_weights_sum_to_volume():
    mesh = build_structured_mesh((1, 1, 1), (1.0, 1.0, 1.0))
    basis = element_basis(mesh, 0)
    assert basis.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert len(basis.weights) == 8


def test_constant_and_coordinate_fields_on_unit_cube():
    mesh = build_structured_mesh((1, 1, 1), (1.0, 1.0, 1.0))
    basis = element_basis(mesh, 0)
    coords = mesh.node_coords[mesh.elements[0]]
    np.testing.assert_allclose(np.einsum("gdn,n->gd", basis.B, np.full(8, 7.5)), 0, atol=1e-12)
    np.testing.assert_allclose(np.einsum("gdn,n->gd", basis.B, coords[:, 0]), [[1, 0, 0]] * 8, atol=1e-12)


def test_element_basis_rejects_bad_index():
    mesh = build_structured_mesh((2, 2), (1.0, 1.0))
    with pytest.raises(IndexError):
        element_basis(mesh, 4)


@settings(max_examples=30, deadline=None)
@given(st.one_of(dims_2d, dims_3d), st.data())
def test_basis_partition_of_unity_and_zero_gradient_sum(dims, data):
    h = data.draw(st.tuples(*[spacing] * len(dims)))
    mesh = build_structured_mesh(dims, h)
    basis = mesh.reference_basis
    np.testing.assert_allclose(basis.N.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(basis.B.sum(axis=2), 0.0, atol=1e-12 * max(1 / min(h), 1))


@settings(max_examples=30, deadline=None)
@given(st.one_of(dims_2d, dims_3d), st.data())
def test_linear_fields_have_exact_gradients(dims, data):
    dim = len(dims)
    h = data.draw(st.tuples(*[spacing] * dim))
    slope = np.array(data.draw(st.tuples(*[st.floats(-10, 10)] * dim)))
    offset = data.draw(st.floats(-100, 100))
    mesh = build_structured_mesh(dims, h)
    field = offset + mesh.node_coords @ slope
    grads = np.einsum("gdn,en->egd", mesh.reference_basis.B, field[mesh.elements])
    np.testing.assert_allclose(grads, np.broadcast_to(slope, grads.shape), atol=1e-12 * (1 + abs(offset)) / min(h))


@settings(max_examples=30, deadline=None)
@given(st.one_of(dims_2d, dims_3d), st.data())
def test_total_volume_matches_box(dims, data):
    h = data.draw(st.tuples(*[spacing] * len(dims)))
    mesh = build_structured_mesh(dims, h)
    expected = float(np.prod(np.array(dims) * np.array(h)))
    total = mesh.reference_basis.weights.sum() * mesh.n_elements
    assert total == pytest.approx(expected, rel=1e-12)
    assert mesh.total_volume == pytest.approx(expected, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(dims_3d, st.data())
def test_connectivity_is_valid_and_positively_oriented(dims, data):
    h = data.draw(st.tuples(*[spacing] * 3))
    mesh = build_structured_mesh(dims, h)
    assert mesh.elements.min() >= 0 and mesh.elements.max() < mesh.n_nodes
    corners = mesh.node_coords[mesh.elements]
    # corner 0 is the lower corner; the diagonal corner is the upper one
    extent = corners.max(axis=1) - corners.min(axis=1)
    np.testing.assert_allclose(extent, np.broadcast_to(h, extent.shape))
    basis = mesh.reference_basis
    assert np.all(basis.weights > 0)


def test_regions_partition_elements_with_priority():
    regions = [
        Region("big", "box", (0.5, 0.5), (1.0, 1.0)),
        Region("small", "sphere", (0.5, 0.5), (0.3,)),
    ]
    mesh = build_structured_mesh((10, 10), (0.1, 0.1), regions)
    counts = np.bincount(mesh.region, minlength=3)
    assert counts.sum() == mesh.n_elements
    assert counts[0] == 0
    centroids = mesh.centroids
    inside = np.sum((centroids - 0.5) ** 2, axis=1) <= 0.15**2
    np.testing.assert_array_equal(mesh.region == 2, inside)


def test_zero_radius_sphere_claims_nothing():
    mesh = build_structured_mesh((4, 4, 4), (0.25,) * 3, [Region("dot", "sphere", (0.5, 0.5, 0.5), (0.0,))])
    assert not np.any(mesh.region == 1)
    assert mesh.n_elements == 64


def test_rotated_ellipsoid_and_sphere_cloaking_layout():
    # reduced resolution of the cloaking domain
    dims = (20, 40, 20)
    h = 0.09 / 20
    regions = [
        Region("device", "sphere", (0.045, 0.09, 0.045), (0.065,)),
        Region("object", "ellipsoid", (0.045, 0.09, 0.045), (0.02, 0.0128, 0.0128), (0, 0, 45)),
    ]
    mesh = build_structured_mesh(dims, (h, h, h), regions, background="matrix")
    counts = np.bincount(mesh.region, minlength=3)
    assert all(counts > 0)
    c = mesh.centroids[mesh.region == 2] - 0.045 * np.array([1, 2, 1])
    # rotation by 45 degrees about z mixes x and y equally
    assert np.ptp(c[:, 0]) == pytest.approx(np.ptp(c[:, 1]), rel=0.2)
    assert np.ptp(c[:, 2]) < np.ptp(c[:, 0])


def test_void_region_deactivates_elements():
    mesh = build_structured_mesh((4, 4), (0.25, 0.25), [Region("hole", "box", (0.5, 0.5), (0.5, 0.5), void=True)])
    assert np.count_nonzero(~mesh.active) == 4
    assert mesh.total_volume == pytest.approx(0.75)


def test_every_boundary_face_has_one_tag():
    mesh = build_structured_mesh(
        (3, 3, 3), (1.0,) * 3,
        boundary=[dirichlet(0, 0, 1.0), dirichlet(0, 1, 0.0), convection(1, 0, 2.0, 3.0)],
    )
    assert len(mesh.face_tags) == len(mesh.boundary_faces) == 6 * 9
    kinds = [mesh.conditions[t].kind if t != ADIABATIC else "adiabatic" for t in mesh.face_tags]
    assert kinds.count("dirichlet") == 18
    assert kinds.count("convection") == 9
    assert kinds.count("adiabatic") == 27


def test_disc_patch_selects_subset_of_face():
    patch = Patch("disc", (0.0, 0.5, 0.5), radius=0.2)
    mesh = build_structured_mesh((10, 10, 10), (0.1,) * 3, boundary=[dirichlet(0, 0, 5.0, patch)])
    faces = mesh.boundary_faces[mesh.face_tags != ADIABATIC]
    centroids = mesh.boundary_face_centroids[mesh.face_tags != ADIABATIC]
    assert np.all(faces[:, 1] == 0)
    assert np.all(np.hypot(centroids[:, 1] - 0.5, centroids[:, 2] - 0.5) <= 0.2 + 1e-12)
    assert 0 < len(faces) < 100


def test_conflicting_dirichlet_values_are_rejected():
    with pytest.raises(MeshError):
        build_structured_mesh((2, 2), (1.0, 1.0), boundary=[dirichlet(0, 0, 1.0), dirichlet(0, 0, 2.0)])


def test_invalid_dims_are_rejected():
    with pytest.raises(MeshError):
        build_structured_mesh((), ())
    with pytest.raises(MeshError):
        build_structured_mesh((0, 2), (1.0, 1.0))
    with pytest.raises(MeshError):
        build_structured_mesh((2, 2), (1.0, -1.0))
