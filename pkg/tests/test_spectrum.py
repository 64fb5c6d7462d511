import math
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from surgery_spectra.errors import EigenspaceError
from surgery_spectra.mesh.intrinsic import IntrinsicMesh, area, disjoint_union
from surgery_spectra.mesh.primitives import flat_torus, icosphere
from surgery_spectra.spectrum.assembly import assemble_mass, assemble_stiffness, export_coo
from surgery_spectra.spectrum.solver import (
    first_eigenspace,
    normalized_lambda1,
    project_first_eigenspace,
    projection_gap,
    quadratic_form_Q,
    solve_mesh,
    solve_smallest,
)


def test_stiffness_is_symmetric_with_constant_kernel(sphere):
    S = assemble_stiffness(sphere)
    assert abs(S - S.T).max() < 1e-14
    assert_allclose(S @ np.ones(sphere.vertex_count), 0.0, atol=1e-12)
    assert (S.diagonal() > 0).all()


def test_mass_sums_to_weighted_area(capped_sphere):
    rho = np.linspace(0.5, 2.0, capped_sphere.vertex_count)
    M = assemble_mass(capped_sphere, rho)
    assert M.diagonal().sum() == pytest.approx(area(capped_sphere, rho), rel=1e-12)


def test_mass_rejects_zero_density(sphere):
    with pytest.raises(ValueError):
        assemble_mass(sphere, np.zeros(sphere.vertex_count))


def test_square_torus_matches_five_point_stencil(square_torus):
    # Right isosceles triangles reduce the cotangent Laplacian to the 5-point stencil.
    n = 12
    _, _, result = solve_mesh(square_torus)
    expected = 4.0 * n * n * math.sin(math.pi / n) ** 2
    assert result.eigenvalues[0] == pytest.approx(0.0, abs=1e-9)
    assert result.lambda1 == pytest.approx(expected, rel=1e-10)
    assert result.first_multiplicity == 4
    assert result.gap_certified
    assert result.lambda1 == pytest.approx(4.0 * math.pi**2, rel=0.03)


def test_single_equilateral_face():
    mesh = IntrinsicMesh.from_lengths(3, [[0, 1, 2]], {(0, 1): 1.0, (1, 2): 1.0, (0, 2): 1.0})
    S = assemble_stiffness(mesh)
    assert S[0, 1] == pytest.approx(-1.0 / (2.0 * math.sqrt(3.0)), rel=1e-14)
    assert S[0, 0] == pytest.approx(1.0 / math.sqrt(3.0), rel=1e-14)
    assert_allclose(assemble_mass(mesh).diagonal(), math.sqrt(3.0) / 12.0, rtol=1e-14)


def test_square_torus_error_is_second_order():
    sizes = np.array([6, 8, 12, 16])
    errors = [abs(normalized_lambda1(flat_torus(int(n))) - 4.0 * math.pi**2) for n in sizes]
    slope = np.polyfit(np.log(1.0 / sizes), np.log(errors), 1)[0]
    assert 1.8 <= slope <= 2.2


def test_equilateral_torus():
    n = 24
    mesh = flat_torus(n, b=(0.5, math.sqrt(3.0) / 2.0))
    assert area(mesh) == pytest.approx(math.sqrt(3.0) / 2.0, rel=1e-12)
    _, _, result = solve_mesh(mesh)
    # six shortest dual vectors; plane waves are exact discrete eigenfunctions
    assert result.first_multiplicity == 6
    assert result.lambda1 == pytest.approx(16.0 / 3.0 * n * n * math.sin(math.pi / n) ** 2, rel=1e-6)
    assert result.lambda1 * area(mesh) == pytest.approx(8.0 * math.pi**2 / math.sqrt(3.0), rel=0.01)


def test_disconnected_tori_have_two_zero_eigenvalues():
    mesh = disjoint_union(flat_torus(6), flat_torus(6))
    _, _, result = solve_mesh(mesh)
    assert_allclose(result.eigenvalues[:2], 0.0, atol=1e-9)
    assert result.eigenvalues[2] > 1.0


def test_normalized_lambda1_is_scale_invariant(sphere, square_torus):
    value = normalized_lambda1(sphere)
    assert normalized_lambda1(replace(sphere, lengths=2.5 * sphere.lengths)) == pytest.approx(value, rel=1e-8)
    rho = 1.0 + np.random.default_rng(5).uniform(size=square_torus.vertex_count)
    weighted = normalized_lambda1(square_torus, rho)
    assert normalized_lambda1(square_torus, 7.0 * rho) == pytest.approx(weighted, rel=1e-10)


def test_sphere_dense_path(sphere):
    _, _, result = solve_mesh(sphere)
    assert result.first_multiplicity == 3
    assert result.lambda1 * area(sphere) == pytest.approx(8.0 * math.pi, rel=0.05)


def test_sphere_sparse_path():
    mesh = icosphere(3, flat_cap=None)
    assert mesh.vertex_count > 300
    value = normalized_lambda1(mesh)
    _, _, result = solve_mesh(mesh)
    assert result.first_multiplicity == 3
    assert value == pytest.approx(8.0 * math.pi, rel=0.02)


@pytest.mark.slow
def test_fine_sphere_within_one_percent():
    assert normalized_lambda1(icosphere(5, flat_cap=None)) == pytest.approx(8.0 * math.pi, rel=0.01)


def test_eigenvectors_are_mass_orthonormal(sphere):
    _, M, result = solve_mesh(sphere)
    gram = result.eigenvectors.T @ (M @ result.eigenvectors)
    assert_allclose(gram, np.eye(gram.shape[0]), atol=1e-8)


def test_zero_mass_vertices_are_eliminated(square_torus):
    rho = np.ones(square_torus.vertex_count)
    star = np.unique(square_torus.faces[(square_torus.faces == 0).any(axis=1)])
    rho[star] = 0.0
    S, M, result = solve_mesh(square_torus, rho)
    assert M.diagonal()[0] == 0.0
    assert np.isfinite(result.eigenvalues).all()
    assert result.lambda1 > 0
    residual = S @ result.eigenvectors - (M @ result.eigenvectors) * result.eigenvalues
    assert np.abs(residual).max() < 1e-8


def test_density_scaling_scales_eigenvalues(square_torus):
    _, _, plain = solve_mesh(square_torus)
    _, _, doubled = solve_mesh(square_torus, np.full(square_torus.vertex_count, 2.0))
    assert doubled.lambda1 == pytest.approx(plain.lambda1 / 2.0, rel=1e-10)


def test_first_eigenspace_and_quadratic_form(square_torus):
    S, M, result = solve_mesh(square_torus)
    basis, k = first_eigenspace(result)
    assert basis.shape == (square_torus.vertex_count, 4)
    assert k == 4
    for column in basis.T:
        assert quadratic_form_Q(S, M, result.lambda1, column, column) == pytest.approx(0.0, abs=1e-8)


def test_first_eigenspace_needs_room(square_torus):
    S = assemble_stiffness(square_torus)
    M = assemble_mass(square_torus)
    result = solve_smallest(S, M, count=4)
    with pytest.raises(EigenspaceError):
        first_eigenspace(result)


def test_projection_and_gap_inequality(square_torus):
    S, M, result = solve_mesh(square_torus)
    u = np.random.default_rng(3).standard_normal(square_torus.vertex_count)
    projected = project_first_eigenspace(result, M, u)
    again = project_first_eigenspace(result, M, projected)
    assert_allclose(again, projected, atol=1e-10)
    rng = np.random.default_rng(3)
    for _ in range(100):
        check = projection_gap(S, M, result, rng.standard_normal(square_torus.vertex_count))
        assert check.slack >= -1e-10 * max(1.0, abs(check.q_value))


def test_gap_inequality_is_tight_on_the_next_eigenspace(square_torus):
    S, M, result = solve_mesh(square_torus)
    u = result.eigenvectors[:, 1 + result.first_multiplicity]
    check = projection_gap(S, M, result, u)
    assert check.q_value > 0
    assert check.slack == pytest.approx(0.0, abs=1e-8 * check.q_value)


def test_solver_rejects_mismatched_sizes(square_torus, sphere):
    with pytest.raises(ValueError):
        solve_smallest(assemble_stiffness(square_torus), assemble_mass(sphere))


def test_export_coo(tmp_path, square_torus):
    S = assemble_stiffness(square_torus)
    path = export_coo(S, tmp_path / "S.coo")
    lines = path.read_text().splitlines()
    V = square_torus.vertex_count
    assert lines[0] == f"# {V} {V} {S.nnz}"
    assert len(lines) == S.nnz + 1
