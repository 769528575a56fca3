# presets.py
"""
Ready-made run configurations for the verification and benchmark cases.

Runs that are too large for a workstation are scaled down; each preset
records what was changed under `desk_scaling` so its reports are
self-describing.
"""
from __future__ import annotations

from typing import Callable

from config import (BoundaryConfig, LoadingConfig, ManufacturedConfig, MaterialConfig,
                    MeshConfig, RunConfig, SolverConfig, StabilizationConfig, validate_config)
from errors import ConfigurationError

# ─────────────────────────── rotation data ────────────────────────
# displacement of a face point rotated by `angle` about (cx, cy) in the x-y plane
_ROT_X = "cos({a})*(x-{cx}) - sin({a})*(y-{cy}) + {cx} - x"
_ROT_Y = "sin({a})*(x-{cx}) + cos({a})*(y-{cy}) + {cy} - y"
# ──────────────────────────────────────────────────────────────────


def _rotation(angle: str, cx: float, cy: float, shift_x: str = "0") -> list[str]:
    a = f"({angle})"
    return [f"{_ROT_X.format(a=a, cx=cx, cy=cy)} + {shift_x}", _ROT_Y.format(a=a, cx=cx, cy=cy)]


# ─────────────────────────── manufactured ─────────────────────────
def _manufactured(case: str, *, dirichlet: str = "nitsche", dim: int = 3, levels=(4, 8, 16),
                  increments: int | None = None, description: str = "") -> RunConfig:
    return RunConfig(
        description=description,
        degree=1,
        mesh=MeshConfig(dim=dim, cells=[levels[0]] * dim),
        material=MaterialConfig(law=case.upper(), mu=1.0, lam=10.0),
        stabilization=StabilizationConfig(beta=1.0, epsilon=0.0, eta_lbb=1.0, eta_lambda=1.0),
        manufactured=ManufacturedConfig(case=case, levels=list(levels), degrees=[1], dirichlet=dirichlet,
                                        increments=increments),
        desk_scaling={"original": "4^3 to 32^3 hexahedra, k = 1, 2, 3, 100 to 2500 Nitsche increments",
                      "scaled": f"{' / '.join(f'{n}^{dim}' for n in levels)} cells, k = 1, "
                                "30 to 120 Nitsche increments per level"},
    )


def manufactured_nhkc_k1() -> RunConfig:
    return _manufactured("nhk-c", description="NHK-C convergence, Nitsche BCs, k = 1")


def manufactured_svkc_k1() -> RunConfig:
    return _manufactured("svk-c", description="SVK-C convergence, Nitsche BCs, k = 1")


def manufactured_nhki_k1() -> RunConfig:
    return _manufactured("nhk-i", description="NHK-I convergence with pressure, k = 1")


def manufactured_svki_k1() -> RunConfig:
    return _manufactured("svk-i", description="SVK-I convergence with pressure, k = 1")


def manufactured_nhkc_lagrange() -> RunConfig:
    cfg = _manufactured("nhk-c", dirichlet="lagrange", levels=(4,), increments=3,
                        description="NHK-C with Lagrange-multiplier BCs in three increments")
    cfg.desk_scaling = {"original": "4^3 to 32^3 hexahedra, k = 1, 2, 3, three increments",
                        "scaled": "4^3 cells, k = 1, three increments"}
    return cfg


def manufactured_nhkc_2d() -> RunConfig:
    cfg = _manufactured("nhk-c", dim=2, levels=(4, 8, 16, 32),
                        description="2-D restriction of the NHK-C field (quick check)")
    cfg.desk_scaling = {"original": "3-D only", "scaled": "2-D restriction, quadrilaterals"}
    return cfg


# ─────────────────────────── 2-D benchmarks ───────────────────────
def _indentation(law: str, increments: int) -> RunConfig:
    return RunConfig(
        name="indentation" if law == "NHK-C" else f"indentation-{law.lower().replace('-', '')}",
        description=f"parabolic indentation of the unit square, {law}",
        mesh=MeshConfig(dim=2, cells=[16, 16], simplicial=True),
        material=MaterialConfig(law=law, mu=0.4, lam=0.4),
        boundaries=[
            BoundaryConfig("bottom", "dirichlet_nitsche", where="y == 0", value=["0", "0"]),
            BoundaryConfig("top", "dirichlet_nitsche", where="y == 1", value=["0", "3*(x - 0.5)**2"]),
            BoundaryConfig("sides", "neumann", where="x == 0 or x == 1", value=["0", "0"]),
        ],
        stabilization=StabilizationConfig(beta=0.0, epsilon=0.0, eta_lbb=1.0, eta_lambda=1.0),
        loading=LoadingConfig(increments=increments),
        solver=SolverConfig(newton_max_iter=12),
    )


def indentation() -> RunConfig:
    return _indentation("NHK-C", 60)


def indentation_svkc() -> RunConfig:
    cfg = _indentation("SVK-C", 60)
    cfg.description += "; Newton is expected to fail about halfway along the loading path"
    return cfg


def indentation_svki() -> RunConfig:
    return _indentation("SVK-I", 40)


def beam() -> RunConfig:
    # rotate the top by pi/2 over the first half of the path, then translate it along x
    top = _rotation("pi/2*min(2*t, 1)", 0.5, 5.0, shift_x="max(0, 2*t - 1)")
    return RunConfig(
        name="beam",
        description="NHK-C strip, top rotated by pi/2 then translated sideways",
        mesh=MeshConfig(dim=2, cells=[5, 11], box=[[0.0, 1.0], [0.0, 5.0]], simplicial=True),
        material=MaterialConfig(law="NHK-C", young=1.0, poisson=0.3),
        boundaries=[
            BoundaryConfig("bottom", "dirichlet_lagrange", where="y == 0", value=["0", "0"]),
            BoundaryConfig("top", "dirichlet_lagrange", where="y == 5", value=top),
            BoundaryConfig("sides", "neumann", where="x == 0 or x == 1", value=["0", "0"]),
        ],
        stabilization=StabilizationConfig(beta=1.0, epsilon=1.0, eta_lambda=1.0),
        loading=LoadingConfig(increments=15),
        desk_scaling={"original": "110 triangles, Nitsche BCs with 600 increments or Lagrange with 15",
                      "scaled": "110 triangles on a 1 x 5 strip, Lagrange BCs, 15 increments"},
    )


def cavitation() -> RunConfig:
    holes = "(x + 0.3)**2 + y**2 > 0.0625 and (x - 0.3)**2 + y**2 > 0.04"
    return RunConfig(
        name="cavitation",
        description="NHK-CAV plate with two voids expanded by g_D = (alpha - 1) X, alpha = 4.7",
        mesh=MeshConfig(dim=2, cells=[40, 40], box=[[-1.0, 1.0], [-1.0, 1.0]], simplicial=True, keep=holes),
        material=MaterialConfig(law="NHK-CAV", mu=0.1, lam=1.0),
        boundaries=[
            BoundaryConfig("outer", "dirichlet_lagrange", where="abs(x) == 1 or abs(y) == 1",
                           value=["3.7*x", "3.7*y"]),
            BoundaryConfig("voids", "neumann", where="abs(x) < 1 and abs(y) < 1", value=["0", "0"]),
        ],
        stabilization=StabilizationConfig(beta=1.0, epsilon=1.0, eta_lambda=1.0),
        loading=LoadingConfig(increments=100),
        desk_scaling={"original": "unit disk with voids of radius 0.25 and 0.2, 8982 triangles",
                      "scaled": "square plate [-1, 1]^2 with the same voids punched out of a 40 x 40 grid"},
    )


# ─────────────────────────── 3-D benchmarks ───────────────────────
def bar_torsion_svki() -> RunConfig:
    top = _rotation("pi/2*t", 0.5, 0.5) + ["0"]
    return RunConfig(
        name="bar-torsion-svki",
        description="SVK-I square bar, H/L = 5, top face rotated about its centroid",
        mesh=MeshConfig(dim=3, cells=[4, 4, 25], box=[[0.0, 1.0], [0.0, 1.0], [0.0, 5.0]]),
        material=MaterialConfig(law="SVK-I", mu=1.0, lam=1.0),
        boundaries=[
            BoundaryConfig("bottom", "dirichlet_nitsche", where="z == 0", value=["0", "0", "0"]),
            BoundaryConfig("top", "dirichlet_nitsche", where="z == 5", value=top),
            BoundaryConfig("sides", "neumann", where="z > 0 and z < 5", value=["0", "0", "0"]),
        ],
        stabilization=StabilizationConfig(beta=0.0, epsilon=0.0, eta_lbb=1.0),
        loading=LoadingConfig(increments=20),
        desk_scaling={"original": "400 hexahedra, full 2 pi turn, up to 80 increments",
                      "scaled": "400 hexahedra, quarter turn in 20 increments"},
    )


def cylinder() -> RunConfig:
    top = _rotation("pi/2*t", 0.0, 0.0) + ["0"]
    return RunConfig(
        name="cylinder",
        description="NHK-C hollow cylinder, H/R = 4, r = 0.7 R, top face rotated up to pi/2",
        mesh=MeshConfig(generator="hollow-cylinder", dim=3, inner=0.7, outer=1.0, height=4.0,
                        counts=[2, 16, 8]),
        material=MaterialConfig(law="NHK-C", young=1.0, poisson=0.25),
        boundaries=[
            BoundaryConfig("bottom", "dirichlet_lagrange", where="z == 0", value=["0", "0", "0"]),
            BoundaryConfig("top", "dirichlet_lagrange", where="z == 4", value=top),
            BoundaryConfig("walls", "neumann", where="z > 0 and z < 4", value=["0", "0", "0"]),
        ],
        stabilization=StabilizationConfig(beta=4.0, epsilon=1.0, eta_lbb=1.0, eta_lambda=1.0),
        loading=LoadingConfig(increments=30),
        desk_scaling={"original": "8906 tetrahedra, Nitsche BCs with 1000 increments or Lagrange with 30",
                      "scaled": "256 straight-faceted hexahedra, Lagrange BCs, 30 increments"},
    )


PRESETS: dict[str, Callable[[], RunConfig]] = {
    "manufactured-nhkc-k1": manufactured_nhkc_k1,
    "manufactured-svkc-k1": manufactured_svkc_k1,
    "manufactured-nhki-k1": manufactured_nhki_k1,
    "manufactured-svki-k1": manufactured_svki_k1,
    "manufactured-nhkc-lagrange": manufactured_nhkc_lagrange,
    "manufactured-nhkc-2d": manufactured_nhkc_2d,
    "indentation": indentation,
    "indentation-svkc": indentation_svkc,
    "indentation-svki": indentation_svki,
    "beam": beam,
    "cavitation": cavitation,
    "bar-torsion-svki": bar_torsion_svki,
    "cylinder": cylinder,
}


def preset_names() -> list[str]:
    return list(PRESETS)


def preset(name: str) -> RunConfig:
    try:
        cfg = PRESETS[name]()
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
    cfg.name = name
    validate_config(cfg)
    return cfg
