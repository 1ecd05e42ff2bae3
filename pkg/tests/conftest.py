import numpy as np
import pytest

from thermotopo.material import MaterialModel, RegionMaterial
from thermotopo.mesh import BoundaryCondition, BoundaryEntry, FaceSelector, build_structured_mesh


def face(axis, side, patch=None):
    return FaceSelector(axis, side, patch)


def dirichlet(axis, side, value, patch=None):
    return BoundaryEntry(BoundaryCondition("dirichlet", value), selector=face(axis, side, patch))


def convection(axis, side, h, ambient):
    return BoundaryEntry(BoundaryCondition("convection", h=h, ambient=ambient), selector=face(axis, side))


def single_material(dim, kappa=1.0, source=0.0, m=5.0, alpha=1e-3, m_r=1.0, alpha_r=1e-3, optimizable=True):
    region = RegionMaterial.isotropic(kappa, dim, source, optimizable)
    return MaterialModel((region,), m, alpha, m_r, alpha_r)


def slab_mesh(dims, length=1.0, hot=1.0, cold=0.0):
    """Box of the given element counts, x-extent ``length``, Dirichlet on both x faces."""
    spacing = [length / dims[0]] + [1.0 / n for n in dims[1:]]
    return build_structured_mesh(dims, spacing, boundary=[dirichlet(0, 0, hot), dirichlet(0, 1, cold)])


def random_design(mesh, rng, soft_share=0.3):
    return rng.random(mesh.n_elements) >= soft_share


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def plate_config(dims=(12, 12), steps=19, t_end=0.95, **optimizer):
    """Mapping for a small 2D compliance run between a hot and a cold edge patch."""
    return {
        "mesh": {"dims": list(dims), "spacing": [1.0 / dims[0], 1.0 / dims[1]]},
        "material": {"regions": {"domain": {"kappa": 1.0}}},
        "boundary": [
            {"face": "x-min", "patch": {"shape": "rect", "center": [0.0, 0.5], "size": [0.0, 0.4]},
             "type": "dirichlet", "value": 293.0},
            {"face": "x-max", "patch": {"shape": "rect", "center": [1.0, 0.5], "size": [0.0, 0.4]},
             "type": "dirichlet", "value": 278.0},
        ],
        "functional": {"kind": "compliance"},
        "optimizer": {"t_start": 0.0, "t_end": t_end, "steps": steps, "tau": 1.0, **optimizer},
        "output": {"directory": "out", "formats": ["vtk", "csv"]},
    }
