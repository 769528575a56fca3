import numpy as np
import pytest

from app import build_problem, newton_settings, run_config
from errors import ConfigurationError
from mesh import FaceKind
from presets import PRESETS, preset, preset_names
from solver import incremental_solve

PATH_PRESETS = [n for n in preset_names() if preset(n).manufactured is None]


def test_every_preset_validates():
    assert len(preset_names()) == len(PRESETS) == 13
    for name in preset_names():
        cfg = preset(name)
        assert cfg.name == name
        assert cfg.description


def test_benchmark_parameters():
    for name in ("indentation", "indentation-svkc", "indentation-svki", "bar-torsion-svki"):
        s = preset(name).stabilization
        assert (s.beta, s.epsilon) == (0.0, 0.0)
    cyl = preset("cylinder")
    assert (cyl.stabilization.beta, cyl.stabilization.epsilon) == (4.0, 1.0)
    assert cyl.dim == 3
    cav = preset("cavitation")
    assert (cav.material.mu, cav.material.lam, cav.loading.increments) == (0.1, 1.0, 100)
    assert preset("indentation-svkc").material.law == "SVK-C"
    beam = preset("beam")
    assert beam.loading.increments == 15
    assert beam.material.lame().lam == pytest.approx(1.0 * 0.3 / (1.3 * 0.4))
    for name in preset_names():
        cfg = preset(name)
        if cfg.desk_scaling:
            assert set(cfg.desk_scaling) == {"original", "scaled"}


def test_indentation_lifts_the_top_edge_parabolically():
    problem = build_problem(preset("indentation"))
    top = problem.partition.regions[1]
    assert top.name == "top"
    X = np.array([[0.0, 1.0], [0.5, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(top.value(X, 1.0), [[0.0, 0.75], [0.0, 0.0], [0.0, 0.75]])
    np.testing.assert_allclose(top.value(X, 0.5)[:, 1], [0.375, 0.0, 0.375])
    assert preset("indentation").loading.increments == preset("indentation-svkc").loading.increments == 60
    assert preset("indentation-svki").loading.increments == 40


def test_manufactured_presets_follow_the_increment_schedule():
    assert preset("manufactured-nhkc-k1").manufactured.increments is None
    assert preset("manufactured-nhkc-lagrange").manufactured.increments == 3
    for name in preset_names():
        cfg = preset(name)
        if cfg.manufactured is not None:
            assert cfg.loading.increments == 1


def test_unknown_preset():
    with pytest.raises(ConfigurationError, match="available"):
        preset("torus")


def test_presets_return_fresh_copies():
    a = preset("beam")
    a.loading.increments = 1
    assert preset("beam").loading.increments == 15


@pytest.mark.parametrize("name", PATH_PRESETS)
def test_preset_boundaries_cover_the_mesh(name):
    problem = build_problem(preset(name))
    kinds = problem.partition.kind[problem.mesh.boundary_faces]
    assert np.all(kinds != FaceKind.INTERNAL)
    cfg = preset(name)
    assert problem.mesh.dim == cfg.dim
    assert len(problem.partition.regions) == len(cfg.boundaries)


def test_cavitation_mesh_has_voids():
    problem = build_problem(preset("cavitation"))
    assert problem.mesh.cell_volumes.sum() < 4.0 - np.pi * (0.0625 + 0.04) * 0.8
    assert len(problem.partition.lagrange_faces) == 160


def test_beam_smoke_run(tmp_path):
    cfg = preset("beam")
    cfg.output.directory = str(tmp_path)
    result = run_config(cfg, smoke=True)
    assert result.converged, result.report.summary()
    assert len(result.report.increments) == 1
    assert (tmp_path / "beam" / "beam_0001.vtk").exists()
    assert (tmp_path / "beam" / "report.json").exists()


@pytest.mark.slow
@pytest.mark.parametrize("name", preset_names())
def test_preset_smoke_runs(name, tmp_path):
    cfg = preset(name)
    cfg.output.directory = str(tmp_path)
    result = run_config(cfg, smoke=True)
    assert result.files
    assert result.converged


@pytest.mark.slow
def test_indentation_contrast():
    nhk = preset("indentation")
    _, report = incremental_solve(build_problem(nhk), nhk.loading.increments, newton_settings(nhk))
    assert report.converged, report.summary()

    svk = preset("indentation-svkc")
    _, report = incremental_solve(build_problem(svk), svk.loading.increments, newton_settings(svk))
    assert not report.converged
    assert 0.25 < report.failed_fraction < 0.75
