import numpy as np
import pytest

from thermotopo.config import config_from_dict
from thermotopo.functionals import Normalization
from thermotopo.io import (
    HISTORY_COLUMNS,
    load_normalization,
    read_history,
    save_normalization,
    vtk_text,
    write_snapshot,
)
from thermotopo.mesh import Region, build_structured_mesh
from thermotopo.optimizer import StepResult
from thermotopo.runner import run_config

from conftest import plate_config


def two_element_result(mesh):
    return StepResult(
        t=0.1, hard=np.array([True, False]), psi=np.linspace(-1, 1, mesh.n_nodes), lam=0.25, cost=-3.5,
        outer_iters=2, bisect_iters=7, constraint_residual=-4e-4, converged=True,
        xi_hat=np.arange(mesh.n_nodes, dtype=float), hard_fraction=np.array([1.0, 0.3]),
        states={"theta1": np.full(mesh.n_nodes, 290.0)},
    )


def section_count(text, keyword):
    line = next(line for line in text.splitlines() if line.startswith(keyword))
    return int(line.split()[1])


def test_two_element_snapshot(tmp_path):
    mesh = build_structured_mesh((2, 1, 1), (0.5, 1.0, 1.0))
    paths = write_snapshot(two_element_result(mesh), mesh, tmp_path)
    text = paths[0].read_text()
    assert section_count(text, "POINTS") == 12
    assert section_count(text, "CELLS") == 2
    assert section_count(text, "CELL_TYPES") == 2
    assert section_count(text, "POINT_DATA") == 12
    assert section_count(text, "CELL_DATA") == 2
    for name in ("psi", "xi_hat", "theta1", "chi", "region", "hard_fraction"):
        assert f"SCALARS {name} double 1" in text
    assert "theta2" not in text
    rows = read_history(paths[1])
    assert len(rows) == 1
    assert rows[0]["constraint_residual"] == pytest.approx(4e-4)


def test_void_elements_are_left_out_of_the_grid():
    corner = Region("corner", "box", (0.5, 0.5), (1.0, 1.0), void=True)
    mesh = build_structured_mesh((3, 2), (1.0, 1.0), [corner])
    text = vtk_text(mesh, {}, {"chi": np.ones(mesh.n_elements)})
    assert section_count(text, "CELLS") == 5
    assert section_count(text, "CELL_DATA") == 5


@pytest.fixture(scope="module")
def plate_runs(tmp_path_factory):
    cfg = config_from_dict(plate_config())
    first = tmp_path_factory.mktemp("first")
    second = tmp_path_factory.mktemp("second")
    summary = run_config(cfg, first)
    run_config(cfg, second)
    return summary, first, second


def test_history_has_one_row_per_step(plate_runs):
    summary, first, _ = plate_runs
    lines = (first / "history.csv").read_text().splitlines()
    assert lines[0] == ",".join(HISTORY_COLUMNS)
    assert len(lines) == 20
    rows = read_history(first / "history.csv")
    t = [row["t"] for row in rows]
    assert t == sorted(t)
    for row in rows:
        assert row["converged"] == 0 or row["constraint_residual"] <= 1e-3
    assert len(list(first.glob("step_*.vtk"))) == len(summary.results) == 19


def test_rerun_gives_identical_files(plate_runs):
    _, first, second = plate_runs
    assert (first / "history.csv").read_bytes() == (second / "history.csv").read_bytes()
    assert (first / "step_0019.vtk").read_bytes() == (second / "step_0019.vtk").read_bytes()


def test_normalization_cache_round_trip(tmp_path):
    norm = Normalization(290.0, 300.0, 0.0, 4.0)
    path = tmp_path / "norm.json"
    save_normalization(path, norm, {"sha256": "abc"})
    assert load_normalization(path, {"sha256": "abc"}) == norm
    assert load_normalization(path, {"sha256": "other"}) is None
    assert load_normalization(tmp_path / "absent.json") is None
    path.write_text("{not json")
    assert load_normalization(path) is None
