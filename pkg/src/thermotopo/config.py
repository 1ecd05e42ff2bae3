"""Problem configuration: YAML parsing, validation and round-trip serialization."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .functionals import KINDS
from .mesh import AXIS_NAMES, BC_KINDS, SHAPES

METHODS = ("closed_form", "levelset")
FORMATS = ("vtk", "csv")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass(frozen=True)
class RegionConfig:
    name: str
    shape: str
    center: tuple[float, ...]
    size: tuple[float, ...]
    rotation_deg: tuple[float, ...] = ()
    void: bool = False


@dataclass(frozen=True)
class MeshConfig:
    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    background: str = "domain"
    regions: tuple[RegionConfig, ...] = ()

    @property
    def region_names(self) -> tuple[str, ...]:
        return (self.background,) + tuple(r.name for r in self.regions)


@dataclass(frozen=True)
class RegionMaterialConfig:
    kappa: float | tuple[tuple[float, ...], ...] = 1.0
    source: float = 0.0
    optimizable: bool = True


@dataclass(frozen=True)
class MaterialConfig:
    regions: tuple[tuple[str, RegionMaterialConfig], ...]
    m_kappa: float = 5.0
    alpha_kappa: float = 1e-3
    m_r: float = 1.0
    alpha_r: float = 1e-3


@dataclass(frozen=True)
class PatchConfig:
    shape: str
    center: tuple[float, ...]
    radius: float = 0.0
    size: tuple[float, ...] = ()


@dataclass(frozen=True)
class FaceConfig:
    face: str  # e.g. "x-min"
    patch: PatchConfig | None = None


@dataclass(frozen=True)
class BoundaryConfig:
    type: str
    face: FaceConfig | None = None
    region: str | None = None
    value: float = 0.0
    h: float = 0.0
    ambient: float = 0.0


@dataclass(frozen=True)
class NormalizationConfig:
    j_av_utopia: float
    j_av_max: float
    j_vr_utopia: float
    j_vr_max: float


@dataclass(frozen=True)
class FunctionalConfig:
    kind: str
    target_flux: tuple[float, ...] | None = None
    target_from_homogeneous: bool = False
    mask_regions: tuple[str, ...] = ()
    port: FaceConfig | None = None
    omega: float = 0.5
    normalization: NormalizationConfig | None = None
    variance_utopia_zero: bool = False
    normalization_cache: str = "normalization.json"


@dataclass(frozen=True)
class LevelSetConfig:
    delta_t: float = 0.1
    rho: float = 0.05
    max_iters: int = 300


@dataclass(frozen=True)
class OptimizerSection:
    t_start: float = 0.0
    t_end: float | None = None
    steps: int = 0
    time_grid: tuple[float, ...] = ()
    method: str = "closed_form"
    tol_chi: float = 0.1
    tol_lambda: float = 0.1
    tol_constraint: float = 1e-3
    max_outer_iters: int = 50
    max_bisection_iters: int = 100
    tau: float = 1.0
    levelset: LevelSetConfig = field(default_factory=LevelSetConfig)

    def grid(self) -> tuple[float, ...]:
        if self.time_grid:
            return tuple(self.time_grid)
        if self.steps and self.t_end is not None:
            step = (self.t_end - self.t_start) / self.steps
            return tuple(self.t_start + step * (i + 1) for i in range(self.steps))
        return ()


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "output"
    snapshot_every: int = 1
    formats: tuple[str, ...] = FORMATS


@dataclass(frozen=True)
class ProblemConfig:
    mesh: MeshConfig
    material: MaterialConfig
    boundary: tuple[BoundaryConfig, ...]
    functional: FunctionalConfig
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    output: OutputConfig = field(default_factory=OutputConfig)


# reading --------------------------------------------------------------------


class _Reader:
    """Collects every validation error instead of stopping at the first."""

    def __init__(self):
        self.errors: list[str] = []

    def fail(self, path: str, message: str):
        self.errors.append(f"{path}: {message}")

    def section(self, data, key, path, required=True):
        value = data.get(key) if isinstance(data, dict) else None
        if value is None:
            if required:
                self.fail(path + key, "missing required section")
            return None
        if not isinstance(value, dict):
            self.fail(path + key, "must be a mapping")
            return None
        return value

    def number(self, data, key, path, default=None, required=False, integer=False, low=None, high=None,
               low_open=False, high_open=False):
        if key not in data or data[key] is None:
            if required:
                self.fail(path + key, "missing required key")
            return default
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            try:
                value = float(value) if not integer else int(value)
            except (TypeError, ValueError):
                self.fail(path + key, f"expected a number, got {value!r}")
                return default
        if integer and (not float(value).is_integer()):
            self.fail(path + key, "expected an integer")
            return default
        value = int(value) if integer else float(value)
        if not math.isfinite(value):
            self.fail(path + key, "must be finite")
            return default
        if low is not None and (value < low or (low_open and value == low)):
            self.fail(path + key, f"must be {'>' if low_open else '>='} {low}")
        if high is not None and (value > high or (high_open and value == high)):
            self.fail(path + key, f"must be {'<' if high_open else '<='} {high}")
        return value

    def vector(self, data, key, path, length=None, required=False, default=None, integer=False):
        if key not in data or data[key] is None:
            if required:
                self.fail(path + key, "missing required key")
            return default
        value = data[key]
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, (list, tuple)):
            self.fail(path + key, "expected a list of numbers")
            return default
        out = []
        for i, v in enumerate(value):
            item = self.number({i: v}, i, f"{path}{key}[", integer=integer)
            if item is None:
                return default
            out.append(item)
        if length is not None and len(out) != length:
            self.fail(path + key, f"expected {length} entries, got {len(out)}")
            return default
        return tuple(out)

    def choice(self, data, key, path, options, default=None, required=False):
        if key not in data or data[key] is None:
            if required:
                self.fail(path + key, "missing required key")
            return default
        value = data[key]
        if value not in options:
            self.fail(path + key, f"must be one of {', '.join(options)}, got {value!r}")
            return default
        return value

    def flag(self, data, key, path, default=False):
        value = data.get(key, default)
        if not isinstance(value, bool):
            self.fail(path + key, "expected true or false")
            return default
        return value

    def text(self, data, key, path, default=None, required=False):
        value = data.get(key, default)
        if value is None:
            if required:
                self.fail(path + key, "missing required key")
            return default
        if not isinstance(value, str):
            self.fail(path + key, "expected a string")
            return default
        return value


def _face(reader: _Reader, data, path, dim) -> FaceConfig | None:
    face = data.get("face")
    names = [f"{a}-{s}" for a in AXIS_NAMES[:dim] for s in ("min", "max")]
    if face not in names:
        reader.fail(path + "face", f"must be one of {', '.join(names)}, got {face!r}")
        return None
    patch = None
    if data.get("patch") is not None:
        p = data["patch"]
        ppath = path + "patch."
        if not isinstance(p, dict):
            reader.fail(path + "patch", "must be a mapping")
            return None
        shape = reader.choice(p, "shape", ppath, ("disc", "rect"), required=True)
        center = reader.vector(p, "center", ppath, dim, required=True)
        radius = reader.number(p, "radius", ppath, 0.0, low=0, required=True) if shape == "disc" else 0.0
        size = reader.vector(p, "size", ppath, dim, required=True) if shape == "rect" else ()
        if shape is None or center is None:
            return None
        patch = PatchConfig(shape, center, radius, size)
    return FaceConfig(face, patch)


def config_from_dict(data) -> ProblemConfig:
    """Validate a parsed mapping; raises ConfigError listing every problem found."""
    r = _Reader()
    if not isinstance(data, dict):
        raise ConfigError(["configuration must be a mapping"])
    unknown = set(data) - {f.name for f in fields(ProblemConfig)}
    for key in sorted(unknown):
        r.fail(key, "unknown section")

    m = r.section(data, "mesh", "")
    mesh = None
    dim = 3
    if m is not None:
        dims = r.vector(m, "dims", "mesh.", required=True, integer=True)
        if dims is not None:
            if len(dims) not in (2, 3):
                r.fail("mesh.dims", "must have 2 or 3 entries")
                dims = None
            elif any(n < 1 for n in dims):
                r.fail("mesh.dims", "entries must be >= 1")
                dims = None
        dim = len(dims) if dims else 3
        spacing = r.vector(m, "spacing", "mesh.", dim, required=True)
        if spacing is not None and any(not s > 0 for s in spacing):
            r.fail("mesh.spacing", "entries must be positive")
            spacing = None
        background = r.text(m, "background", "mesh.", "domain")
        regions = []
        for i, reg in enumerate(m.get("regions") or []):
            path = f"mesh.regions[{i}]."
            if not isinstance(reg, dict):
                r.fail(path[:-1], "must be a mapping")
                continue
            name = r.text(reg, "name", path, required=True)
            shape = r.choice(reg, "shape", path, SHAPES, required=True)
            center = r.vector(reg, "center", path, dim, required=True)
            n_size = 1 if shape == "sphere" else dim
            rsize = r.vector(reg, "size", path, n_size, required=True)
            if rsize is not None and any(s < 0 for s in rsize):
                r.fail(path + "size", "entries must be >= 0")
            rot = r.vector(reg, "rotation_deg", path, default=())
            if rot and len(rot) != (1 if dim == 2 else 3):
                r.fail(path + "rotation_deg", f"expected {1 if dim == 2 else 3} angles")
            void = r.flag(reg, "void", path)
            if None not in (name, shape, center, rsize):
                regions.append(RegionConfig(name, shape, center, rsize, rot, void))
        if dims is not None and spacing is not None:
            mesh = MeshConfig(dims, spacing, background, tuple(regions))
            names = mesh.region_names
            if len(set(names)) != len(names):
                r.fail("mesh.regions", "region names must be unique")
    names = mesh.region_names if mesh else ()

    mat = r.section(data, "material", "")
    material = None
    if mat is not None:
        m_kappa = r.number(mat, "m_kappa", "material.", 5.0, low=1)
        alpha_kappa = r.number(mat, "alpha_kappa", "material.", 1e-3, low=0, high=1, low_open=True, high_open=True)
        m_r = r.number(mat, "m_r", "material.", 1.0, low=1)
        alpha_r = r.number(mat, "alpha_r", "material.", 1e-3, low=0, high=1, low_open=True)
        regs = mat.get("regions")
        entries = []
        if not isinstance(regs, dict) or not regs:
            r.fail("material.regions", "missing required mapping of region name to properties")
        else:
            for name, props in regs.items():
                path = f"material.regions.{name}."
                if names and name not in names:
                    r.fail(path[:-1], "unknown region")
                props = props or {}
                if not isinstance(props, dict):
                    r.fail(path[:-1], "must be a mapping")
                    continue
                kappa = props.get("kappa", 1.0)
                if isinstance(kappa, (list, tuple)):
                    try:
                        kappa = tuple(tuple(float(v) for v in row) for row in kappa)
                        if len(kappa) != dim or any(len(row) != dim for row in kappa):
                            raise ValueError
                    except (TypeError, ValueError):
                        r.fail(path + "kappa", f"expected a scalar or a {dim}x{dim} matrix")
                        continue
                else:
                    kappa = r.number(props, "kappa", path, 1.0, low=0, low_open=True)
                source = r.number(props, "source", path, 0.0)
                optimizable = r.flag(props, "optimizable", path, True)
                entries.append((str(name), RegionMaterialConfig(kappa, source, optimizable)))
            for name in names:
                if name not in regs:
                    r.fail("material.regions", f"no properties for region {name!r}")
        material = MaterialConfig(tuple(entries), m_kappa, alpha_kappa, m_r, alpha_r)

    boundary = []
    bcs = data.get("boundary")
    if bcs is None:
        r.fail("boundary", "missing required section")
        bcs = []
    elif not isinstance(bcs, list):
        r.fail("boundary", "must be a list")
        bcs = []
    for i, bc in enumerate(bcs):
        path = f"boundary[{i}]."
        if not isinstance(bc, dict):
            r.fail(path[:-1], "must be a mapping")
            continue
        kind = r.choice(bc, "type", path, BC_KINDS, required=True)
        face = region = None
        if ("face" in bc) == ("region" in bc):
            r.fail(path[:-1], "needs exactly one of face or region")
            continue
        if "face" in bc:
            face = _face(r, bc, path, dim)
        else:
            region = r.text(bc, "region", path, required=True)
            if names and region not in names:
                r.fail(path + "region", f"unknown region {region!r}")
            if kind != "dirichlet":
                r.fail(path + "type", "regions accept only dirichlet conditions")
        value = r.number(bc, "value", path, 0.0, required=kind in ("dirichlet", "flux"))
        h = r.number(bc, "h", path, 0.0, required=kind == "convection", low=0)
        ambient = r.number(bc, "ambient", path, 0.0, required=kind == "convection")
        if kind is not None and (face is not None or region is not None):
            boundary.append(BoundaryConfig(kind, face, region, value, h, ambient))

    fn = r.section(data, "functional", "")
    functional = None
    if fn is not None:
        kind = r.choice(fn, "kind", "functional.", KINDS, required=True)
        target = r.vector(fn, "target_flux", "functional.", dim)
        from_hom = r.flag(fn, "target_from_homogeneous", "functional.")
        mask = fn.get("mask_regions") or []
        if not isinstance(mask, list) or not all(isinstance(x, str) for x in mask):
            r.fail("functional.mask_regions", "expected a list of region names")
            mask = []
        for name in mask:
            if names and name not in names:
                r.fail("functional.mask_regions", f"unknown region {name!r}")
        if kind == "flux_cloak" and target is None and not from_hom:
            r.fail("functional.target_flux", "flux_cloak needs target_flux or target_from_homogeneous")
        port = None
        if fn.get("port") is not None:
            port = _face(r, fn["port"], "functional.port.", dim) if isinstance(fn["port"], dict) else None
        elif kind == "temp_multi":
            r.fail("functional.port", "temp_multi needs a port")
        omega = r.number(fn, "omega", "functional.", 0.5, low=0, high=1)
        norm = None
        if isinstance(fn.get("normalization"), dict):
            nd = fn["normalization"]
            vals = [r.number(nd, k, "functional.normalization.", required=True)
                    for k in ("j_av_utopia", "j_av_max", "j_vr_utopia", "j_vr_max")]
            if None not in vals:
                norm = NormalizationConfig(*vals)
                if vals[1] == vals[0] or vals[3] == vals[2]:
                    r.fail("functional.normalization", "max values must differ from utopia values")
        elif fn.get("normalization") not in (None, "auto"):
            r.fail("functional.normalization", "expected a mapping or 'auto'")
        vzero = r.flag(fn, "variance_utopia_zero", "functional.")
        cache = r.text(fn, "normalization_cache", "functional.", "normalization.json")
        if kind is not None:
            functional = FunctionalConfig(kind, target, from_hom, tuple(mask), port, omega, norm, vzero, cache)

    opt = r.section(data, "optimizer", "", required=False) or {}
    p = "optimizer."
    t_start = r.number(opt, "t_start", p, 0.0, low=0, high=1, high_open=True)
    t_end = r.number(opt, "t_end", p, None, low=0, high=1, high_open=True)
    steps = r.number(opt, "steps", p, 0, integer=True, low=0)
    grid = r.vector(opt, "time_grid", p, default=())
    if grid and (steps or t_end is not None):
        r.fail(p + "time_grid", "give either time_grid or t_end/steps, not both")
    if steps and t_end is None:
        r.fail(p + "t_end", "required with steps")
    section = OptimizerSection(
        t_start=t_start,
        t_end=t_end,
        steps=steps,
        time_grid=grid,
        method=r.choice(opt, "method", p, METHODS, "closed_form"),
        tol_chi=r.number(opt, "tol_chi", p, 0.1, low=0, low_open=True),
        tol_lambda=r.number(opt, "tol_lambda", p, 0.1, low=0, low_open=True),
        tol_constraint=r.number(opt, "tol_constraint", p, 1e-3, low=0, low_open=True),
        max_outer_iters=r.number(opt, "max_outer_iters", p, 50, integer=True, low=1),
        max_bisection_iters=r.number(opt, "max_bisection_iters", p, 100, integer=True, low=1),
        tau=r.number(opt, "tau", p, 1.0, low=0),
        levelset=_levelset(r, opt.get("levelset") or {}),
    )
    full = (t_start,) + section.grid()
    if any(b <= a for a, b in zip(full, full[1:])) or (len(full) > 1 and full[-1] >= 1):
        r.fail(p + "time_grid", "pseudo-times must increase strictly from t_start and stay below 1")

    out = r.section(data, "output", "", required=False) or {}
    formats = out.get("formats", list(FORMATS))
    if not isinstance(formats, list) or any(f not in FORMATS for f in formats):
        r.fail("output.formats", f"expected a list drawn from {', '.join(FORMATS)}")
        formats = list(FORMATS)
    output = OutputConfig(
        r.text(out, "directory", "output.", "output"),
        r.number(out, "snapshot_every", "output.", 1, integer=True, low=0),
        tuple(formats),
    )

    if r.errors:
        raise ConfigError(r.errors)
    return ProblemConfig(mesh, material, tuple(boundary), functional, section, output)


def _levelset(r: _Reader, data) -> LevelSetConfig:
    p = "optimizer.levelset."
    if not isinstance(data, dict):
        r.fail(p[:-1], "must be a mapping")
        return LevelSetConfig()
    return LevelSetConfig(
        r.number(data, "delta_t", p, 0.1, low=0),
        r.number(data, "rho", p, 0.05, low=0, low_open=True),
        r.number(data, "max_iters", p, 300, integer=True, low=1),
    )


def parse_config(path) -> ProblemConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"]) from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"]) from exc
    return config_from_dict(data)


# writing --------------------------------------------------------------------


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items() if v is not None}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def config_to_dict(cfg: ProblemConfig) -> dict:
    raw = asdict(cfg)
    raw["material"]["regions"] = {name: asdict(props) for name, props in cfg.material.regions}
    for bc in raw["boundary"]:
        if bc["face"] is not None:
            bc.update(bc.pop("face"))
        else:
            bc.pop("face")
    faces = [bc for bc in raw["boundary"] if "face" in bc]
    if raw["functional"].get("port") is not None:
        faces.append(raw["functional"]["port"])
    for face in faces:
        patch = face.get("patch")
        if patch is not None:
            patch.pop("size" if patch["shape"] == "disc" else "radius")
    return _plain(raw)


def dump_config(cfg: ProblemConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)
