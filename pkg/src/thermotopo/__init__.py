"""Thermal topology optimization with closed-form relaxed updates on structured Q1 meshes."""

from .config import ConfigError, ProblemConfig, config_from_dict, dump_config, parse_config
from .fem import SolverError, SolverOptions, assemble, heat_flux, solve
from .functionals import (
    Compliance,
    FluxCloak,
    FunctionalError,
    Normalization,
    TemperatureCloak,
    eval_compliance,
    eval_flux_cloak,
    eval_temp_average,
    eval_temp_variance,
    port_operators,
    xi_compliance,
    xi_flux_cloak,
    xi_temp_average,
    xi_temp_multi,
    xi_temp_variance,
)
from .levelset import LevelSetOptimizer, run_levelset
from .marching import element_fraction, hard_fraction, marching_volume
from .material import MaterialModel, RegionMaterial, exchange_function, relaxed_chi, relaxed_heaviside
from .mesh import BoundaryCondition, BoundaryEntry, FaceSelector, Mesh, Patch, Region, build_structured_mesh
from .optimizer import (
    DesignState,
    InfeasibleConstraint,
    OptimizationError,
    Optimizer,
    OptimizerConfig,
    Problem,
    StepResult,
    cut_and_bisect,
    run_schedule,
    run_step,
    shift_normalize,
)
from .smoothing import Smoother, SmootherConfig

__version__ = "0.1.0"
