import copy
from pathlib import Path

import pytest
import yaml

from thermotopo.build import build_material, build_mesh
from thermotopo.config import ConfigError, config_from_dict, dump_config, parse_config

from conftest import plate_config

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))


def errors_of(data):
    with pytest.raises(ConfigError) as info:
        config_from_dict(data)
    return info.value.errors


def test_conductor_config_values():
    cfg = parse_config(Path(__file__).parent.parent / "configs" / "conductor.yaml")
    assert cfg.material.m_kappa == 5
    assert cfg.material.alpha_kappa == 1e-3
    assert dict(cfg.material.regions)["domain"].kappa == 1.0
    grid = cfg.optimizer.grid()
    assert len(grid) == 19
    assert grid[-1] == pytest.approx(0.95)
    values = {bc.face.face: bc.value for bc in cfg.boundary}
    assert values == {"x-min": 293.0, "x-max": 278.0}
    assert build_material(cfg, build_mesh(cfg)).beta_kappa == pytest.approx(0.2512, abs=5e-5)


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_echo_identically(path):
    cfg = parse_config(path)
    echoed = dump_config(cfg)
    again = config_from_dict(yaml.safe_load(echoed))
    assert again == cfg
    assert dump_config(again) == echoed


def test_missing_dims_is_reported_with_every_other_error():
    data = plate_config()
    del data["mesh"]["dims"]
    data["functional"]["kind"] = "temp_multi"
    data["functional"]["omega"] = 1.5
    data["optimizer"]["t_end"] = 1.2
    errors = errors_of(data)
    text = "\n".join(errors)
    assert "mesh.dims" in text
    assert "functional.omega" in text
    assert "t_end" in text or "time" in text
    assert len(errors) >= 3


def test_weight_outside_unit_interval():
    data = plate_config()
    data["functional"] = {"kind": "temp_multi", "port": {"face": "x-min"}, "omega": 1.5}
    assert any("functional.omega" in e for e in errors_of(data))


def test_unknown_functional_kind():
    data = plate_config()
    data["functional"]["kind"] = "stress"
    assert any("functional.kind" in e for e in errors_of(data))


@pytest.mark.parametrize(
    "section, key, value",
    [
        ("optimizer", "t_end", 1.0),
        ("optimizer", "tau", -1.0),
        ("optimizer", "tol_chi", 0.0),
        ("material", "m_kappa", float("nan")),
    ],
)
def test_out_of_range_values(section, key, value):
    data = plate_config()
    data[section][key] = value
    assert errors_of(data)


def test_decreasing_explicit_grid():
    data = plate_config()
    data["optimizer"] = {"time_grid": [0.2, 0.1], "tau": 1.0}
    assert errors_of(data)


def test_unknown_region_reference():
    data = plate_config()
    data["boundary"].append({"region": "missing", "type": "dirichlet", "value": 300.0})
    assert any("missing" in e for e in errors_of(data))


def test_unknown_section():
    data = copy.deepcopy(plate_config())
    data["solver"] = {}
    assert any(e.startswith("solver") for e in errors_of(data))


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("mesh: [unclosed\n")
    with pytest.raises(ConfigError):
        parse_config(bad)
