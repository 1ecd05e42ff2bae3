import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermotopo.mesh import Region, build_structured_mesh
from thermotopo.smoothing import Smoother, SmootherConfig


def grid(dims=(6, 5, 4), h=0.2):
    return build_structured_mesh(dims, (h,) * len(dims))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(-1e3, 1e3))
def test_constants_are_fixed_points(tau, value):
    smoother = Smoother(grid(), SmootherConfig(tau))
    out = smoother.smooth(np.full(smoother.mesh.n_elements, value))
    np.testing.assert_allclose(out, value, rtol=1e-10, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 5.0), st.integers(0, 2**32 - 1))
def test_mean_is_preserved(tau, seed):
    mesh = grid()
    smoother = Smoother(mesh, SmootherConfig(tau))
    field = np.random.default_rng(seed).standard_normal(mesh.n_elements)
    total = field.sum() * mesh.element_volume
    assert smoother.integral(smoother.smooth(field)) == pytest.approx(total, rel=1e-10, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 5.0), st.integers(0, 2**32 - 1))
def test_discrete_maximum_principle(tau, seed):
    mesh = grid()
    smoother = Smoother(mesh, SmootherConfig(tau))
    field = np.random.default_rng(seed).uniform(-3, 7, mesh.n_elements)
    out = smoother.smooth(field)
    delta = 1e-8 * np.ptp(field)
    assert out.min() >= field.min() - delta
    assert out.max() <= field.max() + delta


def test_zero_tau_is_lumped_projection():
    mesh = grid((4, 3))
    smoother = Smoother(mesh, SmootherConfig(0.0))
    field = np.arange(mesh.n_elements, dtype=float)
    # each node takes the volume-weighted mean of the elements around it
    sums = np.zeros(mesh.n_nodes)
    counts = np.zeros(mesh.n_nodes)
    np.add.at(sums, mesh.elements, field[:, None])
    np.add.at(counts, mesh.elements, 1.0)
    np.testing.assert_allclose(smoother.smooth(field), sums / counts, rtol=1e-12)


def test_spike_spreads_over_smoothing_length():
    mesh = build_structured_mesh((41, 1), (0.025, 0.025))
    field = np.zeros(mesh.n_elements)
    field[20] = 1.0
    narrow = Smoother(mesh, SmootherConfig(1.0)).smooth(field)
    wide = Smoother(mesh, SmootherConfig(4.0)).smooth(field)
    bottom = np.argsort(mesh.node_coords[:, 1], kind="stable")[: mesh.node_dims[0]]
    x = mesh.node_coords[bottom, 0]
    for out, smoother_tau in ((narrow, 1.0), (wide, 4.0)):
        profile = out[bottom][np.argsort(x)]
        centre = int(np.argmax(profile))
        assert centre in (20, 21)
        assert np.all(np.diff(profile[centre + 1:]) <= 0)
        assert np.all(np.diff(profile[:centre]) >= 0)
        assert Smoother(mesh, SmootherConfig(smoother_tau)).integral(out) == pytest.approx(
            field.sum() * mesh.element_volume, rel=1e-10
        )
    # a longer smoothing length gives a lower, wider bump
    assert wide.max() < narrow.max()
    assert wide[bottom].min() > narrow[bottom].min()


def test_epsilon_from_tau_and_element_size():
    mesh = build_structured_mesh((4, 4, 4), (8.3e-3,) * 3)
    assert SmootherConfig(1.0).epsilon(mesh) == pytest.approx(8.3e-3, rel=1e-14)
    assert Smoother(mesh, SmootherConfig(0.5)).epsilon == pytest.approx(4.15e-3, rel=1e-14)


def test_operator_is_symmetric_positive_definite():
    mesh = grid((3, 3, 2))
    G = Smoother(mesh, SmootherConfig(2.0)).operator.toarray()
    np.testing.assert_allclose(G, G.T, atol=1e-15)
    assert np.linalg.eigvalsh(G).min() > 0


def test_negative_tau_is_rejected():
    with pytest.raises(ValueError):
        SmootherConfig(-1.0)


def test_void_elements_do_not_contribute():
    hole = Region("hole", "box", (0.5, 0.5), (0.5, 0.5), void=True)
    mesh = build_structured_mesh((4, 4), (0.25, 0.25), [hole])
    smoother = Smoother(mesh, SmootherConfig(1.0))
    field = np.where(mesh.active, 2.0, 1e6)
    out = smoother.smooth(field)
    np.testing.assert_allclose(out[mesh.node_active], 2.0, rtol=1e-10)
    np.testing.assert_array_equal(out[~mesh.node_active], 0.0)
