import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from surgery_spectra.errors import EigenspaceError, MeshError
from surgery_spectra.glue.surgery import GluingSpec
from surgery_spectra.maximize.ascent import (
    AscentOptions,
    mass_operator,
    maximize_conformal,
    min_norm_direction,
    project_spectraplex,
)
from surgery_spectra.maximize.balance import dilation, mobius_balance
from surgery_spectra.maximize.eigenmap import (
    extract_eigenmap,
    extremal_residual,
    face_gradient_energy,
    gradient_at_point,
    vertex_gradient_density,
)
from surgery_spectra.maximize.experiments import (
    carry_density,
    gap_experiment,
    glued_start,
    scaling_study,
    unit_defect,
)
from surgery_spectra.mesh.primitives import flat_torus, icosphere, icosphere_points
from surgery_spectra.spectrum.assembly import assemble_mass
from surgery_spectra.spectrum.solver import first_eigenspace, solve_mesh
from surgery_spectra.utils.math_utils import clamp, fit_power_law, polar, smoothstep

SHORT_NECK = 1.5 * math.log(2.0)


# Ascent ---------------------------------------------------------------------


def test_mass_operator_reproduces_lumped_mass(capped_sphere):
    rho = np.random.default_rng(1).uniform(0.2, 2.0, capped_sphere.vertex_count)
    B = mass_operator(capped_sphere)
    assert_allclose(B @ rho, assemble_mass(capped_sphere, rho).diagonal(), rtol=1e-12)
    assert_allclose(B @ np.ones(capped_sphere.vertex_count), capped_sphere.vertex_areas, rtol=1e-12)


def test_project_spectraplex():
    C = np.array([[2.0, 0.5, 0.0], [0.5, -1.0, 0.0], [0.0, 0.0, 0.3]])
    P = project_spectraplex(C)
    assert np.trace(P) == pytest.approx(1.0)
    assert np.linalg.eigvalsh(P)[0] >= -1e-12
    assert_allclose(project_spectraplex(P), P, atol=1e-12)


def test_min_norm_direction_keeps_area(sphere):
    _, _, result = solve_mesh(sphere)
    basis, k = first_eigenspace(result)
    a = sphere.vertex_areas
    direction, C, norm = min_norm_direction(basis, mass_operator(sphere), a, result.lambda1)
    assert a @ direction == pytest.approx(0.0, abs=1e-10 * max(1.0, norm))
    assert C.shape == (k, k)
    assert np.trace(C) == pytest.approx(1.0)
    assert norm == pytest.approx(math.sqrt(np.sum(a * direction**2)))


def test_min_norm_direction_for_simple_eigenvalue(square_torus):
    _, _, result = solve_mesh(square_torus)
    basis = result.eigenvectors[:, 1:2]
    _, C, _ = min_norm_direction(basis, mass_operator(square_torus), square_torus.vertex_areas, result.lambda1)
    assert_allclose(C, [[1.0]])


def _tilted_density():
    verts, _ = icosphere_points(2)
    return 1.0 + 0.5 * verts[:, 2]


def test_ascent_is_monotone_and_improves(sphere):
    rho0 = _tilted_density()
    rho, trace = maximize_conformal(sphere, rho0, AscentOptions(max_iter=6))
    assert trace.is_monotone()
    assert trace.final_value > trace.values[0]
    assert trace.final_value < 8.0 * math.pi * 1.1
    assert sphere.vertex_areas @ rho == pytest.approx(1.0)
    assert (rho >= 0).all()
    assert trace.converged or trace.partial
    assert [step.iteration for step in trace.steps] == list(range(len(trace.steps)))


def test_ascent_ignores_density_scale(sphere):
    rho0 = _tilted_density()
    opts = AscentOptions(max_iter=2)
    _, first = maximize_conformal(sphere, rho0, opts)
    _, second = maximize_conformal(sphere, 7.5 * rho0, opts)
    assert_allclose(first.values, second.values, rtol=1e-9)


def test_fixed_point_mode_is_monotone():
    mesh = icosphere(1, flat_cap=None)
    verts, _ = icosphere_points(1)
    _, trace = maximize_conformal(mesh, 1.0 + 0.3 * verts[:, 0], AscentOptions(max_iter=3, mode="fixed_point"))
    assert trace.is_monotone()


def test_fixed_point_mode_with_simple_lambda1():
    mesh = flat_torus(8)
    rho0 = 1.0 + 3.0 * np.random.default_rng(11).uniform(size=mesh.vertex_count)
    _, trace = maximize_conformal(mesh, rho0, AscentOptions(max_iter=3, mode="fixed_point", cluster_tol=1e-6))
    assert trace.steps[0].multiplicity == 1
    assert trace.is_monotone()


def test_ascent_iteration_cap_is_partial(sphere):
    _, trace = maximize_conformal(sphere, _tilted_density(), AscentOptions(max_iter=0))
    assert len(trace.steps) == 1
    assert trace.partial
    assert trace.reason == "iteration cap"


@pytest.mark.parametrize(
    "opts",
    [AscentOptions(mode="newton"), AscentOptions(step=0.0), AscentOptions(tol=0.0), AscentOptions(max_iter=-1)],
)
def test_ascent_options_validate(opts):
    with pytest.raises(ValueError):
        opts.validate()


# Eigenmaps ------------------------------------------------------------------


def test_sphere_eigenmap_is_nearly_unit(sphere):
    _, M, result = solve_mesh(sphere)
    basis, _ = first_eigenspace(result)
    eigenmap = extract_eigenmap(basis, M)
    assert eigenmap.rank == 3
    assert eigenmap.unit_defect < 0.1
    assert eigenmap.fit_residual < 0.05
    assert np.linalg.eigvalsh(eigenmap.gram)[0] > 0
    assert_allclose(eigenmap.components, basis @ eigenmap.coefficients)


def test_eigenmap_needs_two_functions():
    with pytest.raises(EigenspaceError):
        extract_eigenmap(np.ones((10, 1)), np.ones(10))


def test_gradient_of_linear_function_on_flat_disk(disk):
    xy = disk.flat_patches[0].coords
    assert_array_equal(disk.flat_patches[0].vertices, np.arange(disk.vertex_count))
    u = 0.7 * xy[:, 0] - 1.2 * xy[:, 1] + 3.0
    assert_allclose(face_gradient_energy(disk, u), 0.49 + 1.44, rtol=1e-10)
    assert gradient_at_point(disk, u, 0) == pytest.approx(0.49 + 1.44, rel=1e-10)
    assert gradient_at_point(disk, xy, 0) == pytest.approx(2.0, rel=1e-10)
    assert_allclose(vertex_gradient_density(disk, xy), 2.0, rtol=1e-10)


def test_extremal_residual_of_identity_chart(disk):
    xy = disk.flat_patches[0].coords
    assert extremal_residual(disk, None, xy, 2.0) == pytest.approx(0.0, abs=1e-10)
    assert extremal_residual(disk, None, np.zeros_like(xy), 2.0) == pytest.approx(1.0)


def test_gradient_at_point_rejects_bad_vertices(disk):
    u = np.zeros(disk.vertex_count)
    with pytest.raises(MeshError, match="boundary"):
        gradient_at_point(disk, u, disk.boundary_loops[0].vertices[0])
    with pytest.raises(MeshError, match="out of range"):
        gradient_at_point(disk, u, disk.vertex_count)


# Balancing ------------------------------------------------------------------


def _unit(rows):
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def test_dilation_at_origin_is_identity():
    x = _unit(np.random.default_rng(0).standard_normal((20, 3)))
    assert_allclose(dilation(np.zeros(3), x), x)


def test_dilation_maps_sphere_to_sphere():
    rng = np.random.default_rng(1)
    x = _unit(rng.standard_normal((50, 4)))
    a = 0.6 * _unit(rng.standard_normal((1, 4)))[0]
    assert_allclose(np.linalg.norm(dilation(a, x), axis=1), 1.0, rtol=1e-12)


def test_balanced_map_needs_no_iterations():
    phi = np.vstack([np.eye(3), -np.eye(3)])
    result = mobius_balance(phi, np.ones(6))
    assert result.iterations == 0
    assert result.converged
    assert not result.degenerate
    assert_allclose(result.a, 0.0)


def test_balancing_a_biased_cloud():
    rng = np.random.default_rng(2)
    phi = _unit(rng.standard_normal((200, 3)) + np.array([0.8, 0.0, 0.0]))
    mu = rng.uniform(0.5, 1.5, 200)
    result = mobius_balance(phi, mu)
    assert result.converged
    assert np.linalg.norm(result.a) < 1.0
    assert_allclose((mu / mu.sum()) @ result.samples, 0.0, atol=1e-9)
    assert_allclose(np.linalg.norm(result.samples, axis=1), 1.0, rtol=1e-12)


def test_balancing_flags_degenerate_maps():
    angles = np.linspace(0.0, 2.0 * math.pi, 12, endpoint=False)
    phi = np.stack([np.cos(angles), np.sin(angles), np.zeros_like(angles)], axis=1)
    assert mobius_balance(phi, np.ones(12)).degenerate


def test_balancing_rejects_non_unit_maps():
    with pytest.raises(ValueError):
        mobius_balance(2.0 * np.vstack([np.eye(3), -np.eye(3)]), np.ones(6))
    with pytest.raises(ValueError):
        mobius_balance(np.vstack([np.eye(3), -np.eye(3)]), -np.ones(6))


def test_balancing_reports_energy(sphere):
    verts, _ = icosphere_points(2)
    result = mobius_balance(verts, sphere.vertex_areas, mesh=sphere)
    assert result.converged
    assert result.energy_before == pytest.approx(result.energy_after, rel=1e-8)
    assert not result.energy_increased


# Experiments ----------------------------------------------------------------


def test_carry_density():
    mapping = np.array([2, -1, 0])
    out = carry_density(np.array([1.0, 5.0, 3.0]), mapping, 5, fill=9.0)
    assert_allclose(out, [3.0, 9.0, 1.0, 9.0, 9.0])


def test_glued_start(crosscap):
    straight, rho = glued_start(crosscap, np.ones(crosscap.base.vertex_count))
    assert straight.vertex_count == crosscap.mesh.vertex_count
    assert rho.shape == (straight.vertex_count,)
    assert (rho > 0).all()


def test_gap_experiment_keeps_grid_order(capped_sphere):
    specs = [GluingSpec("crosscap", 0, 0.1, L, 8) for L in (SHORT_NECK, 1.5)]
    report = gap_experiment(capped_sphere, None, specs, AscentOptions(max_iter=2), threads=2)
    assert [row.L for row in report.rows] == [SHORT_NECK, 1.5]
    for row in report.rows:
        assert row.base_value > 0
        assert row.glued_value >= row.glued_initial * (1.0 - 1e-9)
        assert row.gap == pytest.approx(row.glued_value - row.base_value)
    assert report.density_at_p == 1.0
    payload = report.to_dict()
    assert len(payload["rows"]) == 2
    assert payload["max_gap"] == report.max_gap


def test_gap_experiment_needs_specs(capped_sphere):
    with pytest.raises(ValueError):
        gap_experiment(capped_sphere, None, [])


def test_scaling_study_validates_grid(capped_sphere):
    few = [GluingSpec("crosscap", 0, eps, SHORT_NECK, 8) for eps in (0.1, 0.05, 0.025)]
    with pytest.raises(ValueError, match="four"):
        scaling_study(capped_sphere, None, few)
    mixed = few + [GluingSpec("handle", 0, 0.01, SHORT_NECK, 8)]
    with pytest.raises(ValueError, match="mixes"):
        scaling_study(capped_sphere, None, mixed)


def test_unit_defect_is_a_mass_weighted_mean():
    phi = np.array([[1.0, 0.0], [0.0, 0.5], [0.0, 0.0]])
    mass = np.array([1.0, 2.0, 1.0])
    assert unit_defect(phi, mass) == pytest.approx((2.0 * 0.25 + 1.0) / 4.0)
    assert unit_defect(phi, 40.0 * mass) == pytest.approx(unit_defect(phi, mass), rel=1e-14)
    assert unit_defect(phi[:1], mass[:1]) == 0.0


# Helpers --------------------------------------------------------------------


def test_power_law_slopes():
    eps = np.geomspace(1e-3, 1e-1, 6)
    plain = fit_power_law(eps, 3.0 * eps)
    assert plain.defined
    assert plain.slope == pytest.approx(1.0, abs=1e-10)
    assert plain.ci_low <= plain.slope <= plain.ci_high
    logged = fit_power_law(eps, eps * np.abs(np.log(eps)))
    assert 0.7 < logged.slope < 1.0
    assert logged.log_slope == pytest.approx(1.0, abs=0.01)


def test_power_law_undefined_cases():
    eps = np.array([0.1, 0.05, 0.025, 0.0125])
    assert not fit_power_law(eps, np.array([1.0, 0.0, -1.0, 0.0])).defined
    flat = fit_power_law(eps, np.full(4, 2.0))
    assert not flat.defined
    assert flat.reason == "values do not vary"


def test_small_helpers():
    assert clamp(5, 0, 3) == 3
    assert clamp(-1.0, 0.0, 3.0) == 0.0
    assert_allclose(smoothstep(np.array([-1.0, 0.5, 2.0])), [0.0, 0.5, 1.0])
    r, theta = polar(np.array([[0.0, 2.0]]), np.array([0.0, 0.0]))
    assert r[0] == pytest.approx(2.0)
    assert theta[0] == pytest.approx(math.pi / 2)
