# config.py
"""
Run configuration: a tree of dataclasses read from / written to YAML.

Every validation error names the offending field path, e.g.
`boundaries[2].value` or `material.law`.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from errors import ConfigurationError, InvalidArgumentError
from hyperelastic import LameParams, MaterialLaw, lame_from_young_poisson
from mesh import KIND_NAMES
from solver import ETA_POLICIES, LINEAR_SOLVERS, STATE_POLICIES
from utils import parse_expression, parse_vector
from verification import CASE_NAMES

# ─────────────────────────── constants ────────────────────────────
GENERATORS = ("cartesian", "hollow-cylinder")
DIRICHLET_MODES = ("nitsche", "lagrange")
# ──────────────────────────────────────────────────────────────────


@dataclass
class MeshConfig:
    file: str | None = None
    generator: str = "cartesian"
    dim: int = 2
    cells: list[int] = field(default_factory=lambda: [4, 4])
    box: list[list[float]] | None = None
    simplicial: bool = False
    keep: str | None = None             # centroid predicate, cells failing it are removed
    inner: float = 0.7
    outer: float = 1.0
    height: float = 4.0
    counts: list[int] = field(default_factory=lambda: [2, 16, 8])


@dataclass
class MaterialConfig:
    law: str = "NHK-C"
    mu: float | None = None
    lam: float | None = None
    young: float | None = None
    poisson: float | None = None
    density: float = 1.0

    def material_law(self) -> MaterialLaw:
        try:
            return MaterialLaw.parse(self.law)
        except InvalidArgumentError as exc:
            raise ConfigurationError(str(exc), field="material.law") from None

    def lame(self) -> LameParams:
        try:
            if self.young is not None or self.poisson is not None:
                if self.young is None or self.poisson is None:
                    raise ConfigurationError("give both young and poisson", field="material")
                return lame_from_young_poisson(self.young, self.poisson)
            if self.mu is None:
                raise ConfigurationError("missing shear modulus mu (or young/poisson)", field="material.mu")
            return LameParams(self.mu, self.lam or 0.0)
        except InvalidArgumentError as exc:
            raise ConfigurationError(str(exc), field="material") from None


@dataclass
class BoundaryConfig:
    name: str
    kind: str
    where: str | None = None
    tag: str | int | None = None
    value: list[str] | None = None


@dataclass
class StabilizationConfig:
    beta: float = 1.0
    epsilon: float = 0.0
    eta_lbb: float = 1.0
    eta_lambda: float = 1.0


@dataclass
class LoadingConfig:
    increments: int = 1


@dataclass
class SolverConfig:
    newton_tol: float = 1e-10
    newton_atol: float = 0.0
    newton_stall_tol: float = 1e-6
    newton_max_iter: int = 8
    linear_solver: str = "direct"
    recompute_eta: str = "per-increment"
    split_on_failure: bool = False
    max_splits: int = 4
    invalid_state: str = "report"
    quad_degree: int | None = None
    patch_angle: float = 30.0
    allow_incompressible_lagrange: bool = False


@dataclass
class OutputConfig:
    directory: str = "output"
    vtk: bool = True
    every: int = 1


@dataclass
class ManufacturedConfig:
    case: str = "nhk-c"
    levels: list[int] = field(default_factory=lambda: [4, 8, 16])
    degrees: list[int] = field(default_factory=lambda: [1])
    dirichlet: str = "nitsche"
    increments: int | None = None     # per level; None follows the default schedule
    mu: float = 1.0
    lam: float = 10.0


@dataclass
class RunConfig:
    name: str = "run"
    description: str = ""
    degree: int = 1
    mesh: MeshConfig = field(default_factory=MeshConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    boundaries: list[BoundaryConfig] = field(default_factory=list)
    body_force: list[str] | None = None
    stabilization: StabilizationConfig = field(default_factory=StabilizationConfig)
    loading: LoadingConfig = field(default_factory=LoadingConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    manufactured: ManufacturedConfig | None = None
    desk_scaling: dict[str, str] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return 3 if self.mesh.generator == "hollow-cylinder" else self.mesh.dim

    def copy(self) -> "RunConfig":
        return copy.deepcopy(self)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        if self.manufactured is None:
            out.pop("manufactured")
        return out


# ─────────────────────────── parsing ──────────────────────────────
_SECTIONS = {
    "mesh": MeshConfig, "material": MaterialConfig, "stabilization": StabilizationConfig,
    "loading": LoadingConfig, "solver": SolverConfig, "output": OutputConfig,
    "manufactured": ManufacturedConfig,
}


def _section(cls: type, data: Any, path: str) -> Any:
    if data is None:
        return cls()
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"expected a mapping, got {type(data).__name__}", field=path)
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigurationError(f"unknown key (expected one of {sorted(known)})", field=f"{path}.{key}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigurationError(str(exc), field=path) from None


def config_from_dict(data: Mapping[str, Any]) -> RunConfig:
    if not isinstance(data, Mapping):
        raise ConfigurationError("configuration root must be a mapping")
    known = {f.name for f in fields(RunConfig)}
    for key in data:
        if key not in known:
            raise ConfigurationError(f"unknown key (expected one of {sorted(known)})", field=key)
    kwargs: dict[str, Any] = {k: v for k, v in data.items() if k not in _SECTIONS and k != "boundaries"}
    for key, cls in _SECTIONS.items():
        if key in data and (key != "manufactured" or data[key] is not None):
            kwargs[key] = _section(cls, data[key], key)
    boundaries = data.get("boundaries") or []
    if not isinstance(boundaries, list):
        raise ConfigurationError("expected a list of regions", field="boundaries")
    kwargs["boundaries"] = [_section(BoundaryConfig, b, f"boundaries[{i}]") for i, b in enumerate(boundaries)]
    if kwargs.get("body_force") is not None and isinstance(kwargs["body_force"], str):
        kwargs["body_force"] = [kwargs["body_force"]]
    cfg = RunConfig(**kwargs)
    validate_config(cfg)
    return cfg


def load_config(source: str | Path) -> RunConfig:
    """Parse YAML text, or the file it names."""
    text = str(source)
    path = Path(text) if "\n" not in text and len(text) < 4096 else None
    if path is not None and path.suffix in (".yaml", ".yml") and path.exists():
        text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML: {exc}") from None
    return config_from_dict(data or {})


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


# ─────────────────────────── validation ───────────────────────────
def _require(cond: bool, message: str, path: str) -> None:
    if not cond:
        raise ConfigurationError(message, field=path)


def _number(value: Any, path: str, *, integer: bool = False) -> None:
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    _require(ok and not isinstance(value, bool), f"expected {'an integer' if integer else 'a number'}, "
             f"got {value!r}", path)


def validate_config(cfg: RunConfig) -> None:
    _number(cfg.degree, "degree", integer=True)
    _require(cfg.degree >= 1, "polynomial degree must be >= 1", "degree")

    m = cfg.mesh
    _require(m.generator in GENERATORS, f"expected one of {GENERATORS}", "mesh.generator")
    _require(m.dim in (2, 3), "dimension must be 2 or 3", "mesh.dim")
    if m.file is None and m.generator == "cartesian":
        _require(isinstance(m.cells, list) and len(m.cells) == m.dim and all(
            isinstance(n, int) and n >= 1 for n in m.cells), f"need {m.dim} positive cell counts", "mesh.cells")
    if m.keep is not None:
        _expression(m.keep, "mesh.keep")

    law = cfg.material.material_law()
    cfg.material.lame()
    _number(cfg.material.density, "material.density")
    _require(cfg.material.density > 0.0, "density must be positive", "material.density")

    if cfg.manufactured is not None:
        mc = cfg.manufactured
        _require(str(mc.case).lower() in CASE_NAMES, f"expected one of {CASE_NAMES}", "manufactured.case")
        _require(mc.dirichlet in DIRICHLET_MODES, f"expected one of {DIRICHLET_MODES}", "manufactured.dirichlet")
        _require(len(mc.levels) >= 1 and all(isinstance(n, int) and n >= 1 for n in mc.levels),
                 "levels are positive cell counts per axis", "manufactured.levels")
        _require(len(mc.degrees) >= 1 and all(isinstance(k, int) and k >= 1 for k in mc.degrees),
                 "degrees must be >= 1", "manufactured.degrees")
        if mc.increments is not None:
            _number(mc.increments, "manufactured.increments", integer=True)
            _require(mc.increments >= 1, "need at least one increment", "manufactured.increments")
    else:
        _require(len(cfg.boundaries) > 0, "at least one boundary region is required", "boundaries")

    seen: set[str] = set()
    for i, b in enumerate(cfg.boundaries):
        path = f"boundaries[{i}]"
        _require(b.name not in seen, f"duplicate region name {b.name!r}", f"{path}.name")
        seen.add(b.name)
        _require(b.kind in KIND_NAMES, f"expected one of {sorted(KIND_NAMES)}", f"{path}.kind")
        _require(b.where is None or b.tag is None, "give either where or tag, not both", path)
        if b.where is not None:
            _expression(b.where, f"{path}.where")
        if b.value is not None:
            _vector(b.value, cfg.dim, f"{path}.value")
        if law.incompressible and b.kind == "dirichlet_lagrange":
            _require(cfg.solver.allow_incompressible_lagrange,
                     "Lagrange-multiplier Dirichlet conditions are untested in the incompressible "
                     "regime (set solver.allow_incompressible_lagrange to override)", f"{path}.kind")
    if cfg.body_force is not None:
        _vector(cfg.body_force, cfg.dim, "body_force")

    s = cfg.stabilization
    for name in ("beta", "epsilon"):
        _number(getattr(s, name), f"stabilization.{name}")
        _require(getattr(s, name) >= 0.0, "must be >= 0", f"stabilization.{name}")
    for name in ("eta_lbb", "eta_lambda"):
        _number(getattr(s, name), f"stabilization.{name}")
        _require(getattr(s, name) > 0.0, "must be > 0", f"stabilization.{name}")

    _number(cfg.loading.increments, "loading.increments", integer=True)
    _require(cfg.loading.increments >= 1, "need at least one increment", "loading.increments")

    sv = cfg.solver
    _number(sv.newton_tol, "solver.newton_tol")
    _require(sv.newton_tol > 0.0, "must be positive", "solver.newton_tol")
    for name in ("newton_atol", "newton_stall_tol"):
        _number(getattr(sv, name), f"solver.{name}")
    _require(sv.newton_atol >= 0.0, "must be >= 0", "solver.newton_atol")
    _require(0.0 <= sv.newton_stall_tol < 1.0, "must be in [0, 1)", "solver.newton_stall_tol")
    _number(sv.newton_max_iter, "solver.newton_max_iter", integer=True)
    _require(sv.newton_max_iter >= 1, "must be >= 1", "solver.newton_max_iter")
    _require(sv.linear_solver in LINEAR_SOLVERS, f"expected one of {LINEAR_SOLVERS}", "solver.linear_solver")
    _require(sv.recompute_eta in ETA_POLICIES, f"expected one of {ETA_POLICIES}", "solver.recompute_eta")
    _require(sv.invalid_state in STATE_POLICIES, f"expected one of {STATE_POLICIES}", "solver.invalid_state")
    _require(sv.quad_degree is None or (isinstance(sv.quad_degree, int) and sv.quad_degree >= 1),
             "must be a positive integer", "solver.quad_degree")
    _require(cfg.output.every >= 1, "must be >= 1", "output.every")


def _expression(text: str, path: str):
    try:
        return parse_expression(text)
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc), field=path) from None


def _vector(texts: Any, dim: int, path: str):
    _require(isinstance(texts, list) and len(texts) == dim,
             f"expected a list of {dim} component expressions", path)
    try:
        return parse_vector([str(s) for s in texts])
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc), field=path) from None
