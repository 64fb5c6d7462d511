import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from surgery_spectra import config
from surgery_spectra.errors import MeshError
from surgery_spectra.mesh.files import dumps, list_mesh_files, load, loads, save
from surgery_spectra.mesh.intrinsic import (
    IntrinsicMesh,
    area,
    check_density,
    components,
    disjoint_union,
    euler_char,
    heron,
    orientability,
    validate,
)
from surgery_spectra.mesh.primitives import (
    build_primitive,
    cylinder,
    flat_disk,
    flat_torus,
    icosphere,
    icosphere_points,
    moebius,
    round_cap_density,
)


PRIMITIVE_CASES = [
    ("icosphere", {"subdiv": 1}, 2, True),
    ("icosphere", {"subdiv": 2, "flat_cap": 0.8}, 2, True),
    ("flat_torus", {"n": 6}, 0, True),
    ("flat_torus", {"n": 8, "b": (0.5, math.sqrt(3.0) / 2.0)}, 0, True),
    ("flat_disk", {"rings": 4, "n": 10}, 1, True),
    ("cylinder", {"L": 1.0, "n": 16}, 0, True),
    ("moebius", {"L": 1.0, "n": 16}, 0, False),
]


@pytest.mark.parametrize("kind, params, chi, orientable", PRIMITIVE_CASES)
def test_primitives_are_valid(kind, params, chi, orientable):
    mesh = build_primitive(kind, **params)
    assert validate(mesh) == []
    assert euler_char(mesh) == chi
    assert orientability(mesh) is orientable


def test_icosphere_area_approaches_round_sphere():
    total = area(icosphere(3, flat_cap=None))
    assert 0.97 * 4.0 * math.pi < total < 4.0 * math.pi


def test_flat_cap_keeps_vertex_zero_at_chart_origin(capped_sphere):
    patch = capped_sphere.flat_patches[0]
    assert patch.center == 0
    assert_allclose(patch.chart[0], [0.0, 0.0])
    assert patch.radius > 0.5


def test_icosphere_flat_cap_defaults_to_delta0():
    mesh = build_primitive("icosphere", subdiv=3)
    assert len(mesh.flat_patches) == 1
    patch = mesh.flat_patches[0]
    verts, _ = icosphere_points(3)
    geodesic = np.arccos(np.clip(verts @ verts[0], -1.0, 1.0))
    assert patch.center == 0
    assert sorted(patch.vertices) == np.where(geodesic <= config.DELTA0)[0].tolist()
    # room for a cut of radius 0.1 around the centre
    assert config.REMOVAL_FACTOR * 0.1 < patch.radius < 2.0 * math.tan(config.DELTA0 / 2.0)
    assert validate(mesh) == []


def test_round_icosphere_has_no_flat_patch():
    assert icosphere(2, flat_cap=None).flat_patches == ()
    # a cap holding no whole face gives no patch
    assert icosphere(1).flat_patches == ()


def test_round_cap_density(capped_sphere):
    rho = round_cap_density(capped_sphere)
    patch = capped_sphere.flat_patches[0]
    outside = np.setdiff1d(np.arange(capped_sphere.vertex_count), patch.vertices)
    assert_allclose(rho[outside], 1.0)
    assert rho[0] == pytest.approx(1.0)
    assert (rho[list(patch.vertices)] <= 1.0).all()


def test_heron_right_triangle():
    assert_allclose(heron(np.array([[3.0, 4.0, 5.0], [1.0, 1.0, 1.0]])), [6.0, math.sqrt(3.0) / 4.0])


def test_square_torus_has_unit_area(square_torus):
    assert area(square_torus) == pytest.approx(1.0, rel=1e-12)
    assert_allclose(square_torus.vertex_areas, 1.0 / 144.0)


def test_weighted_area_uses_face_average(disk):
    rho = np.full(disk.vertex_count, 2.0)
    assert area(disk, rho) == pytest.approx(2.0 * area(disk))


def test_validate_reports_triangle_inequality():
    mesh = IntrinsicMesh.from_lengths(3, [[0, 1, 2]], {(0, 1): 1.0, (1, 2): 1.0, (0, 2): 3.0})
    kinds = {v.kind for v in validate(mesh)}
    assert "triangle_inequality" in kinds


def test_validate_reports_missing_edge():
    mesh = IntrinsicMesh.from_lengths(3, [[0, 1, 2]], {(0, 1): 1.0, (1, 2): 1.0})
    assert [v.kind for v in validate(mesh)] == ["missing_edge"]


def test_validate_reports_bad_index():
    mesh = IntrinsicMesh.from_lengths(3, [[0, 1, 5]], {(0, 1): 1.0})
    assert [v.kind for v in validate(mesh)] == ["index"]


def test_validate_reports_edge_on_three_faces():
    lengths = {(0, 1): 1.0, (0, 2): 1.0, (1, 2): 1.0, (0, 3): 1.0, (1, 3): 1.0, (0, 4): 1.0, (1, 4): 1.0}
    mesh = IntrinsicMesh.from_lengths(5, [[0, 1, 2], [0, 1, 3], [0, 1, 4]], lengths)
    manifold = [v for v in validate(mesh) if v.kind == "manifold"]
    assert len(manifold) == 1
    assert manifold[0].where == (0, 1)


def test_check_density_rejects_negative(disk):
    rho = np.ones(disk.vertex_count)
    rho[3] = -1.0
    with pytest.raises(ValueError):
        check_density(disk, rho)
    with pytest.raises(ValueError):
        check_density(disk, np.ones(disk.vertex_count + 1))


def test_disjoint_union_has_two_components():
    mesh = disjoint_union(icosphere(0, flat_cap=None), icosphere(0, flat_cap=None))
    count, labels = components(mesh)
    assert count == 2
    assert_array_equal(np.bincount(labels), [12, 12])
    assert euler_char(mesh) == 4


def test_moebius_rejects_odd_resolution():
    with pytest.raises(MeshError):
        moebius(1.0, 15)


def test_torus_rejects_parallel_lattice():
    with pytest.raises(MeshError):
        flat_torus(6, a=(1.0, 0.0), b=(2.0, 0.0))


def test_unknown_primitive():
    with pytest.raises(MeshError, match="unknown primitive"):
        build_primitive("klein_bottle")


def test_cylinder_boundary_loops():
    mesh = cylinder(1.0, 12, rings=4)
    assert len(mesh.boundary_loops) == 2
    assert mesh.boundary_loops[0].vertices == tuple(range(12))
    assert mesh.boundary_vertices.sum() == 24


@pytest.mark.parametrize("L, n", [(1.0, 12), (0.3, 16), (2.5, 8)])
def test_band_areas_are_exact(L, n):
    assert area(cylinder(L, n)) == pytest.approx(2.0 * math.pi * 2.0 * L, rel=1e-12)
    assert area(moebius(L, n)) == pytest.approx(2.0 * math.pi * L, rel=1e-12)


def test_file_round_trip(tmp_path):
    mesh = flat_disk(rings=3, n=8)
    path = save(mesh, tmp_path / "disk.imesh", comments=["kind=test"])
    again = load(path)
    assert again.name == mesh.name
    assert again.vertex_count == mesh.vertex_count
    assert_array_equal(again.faces, mesh.faces)
    assert_array_equal(again.lengths, mesh.lengths)
    assert again.boundary_loops[0].vertices == mesh.boundary_loops[0].vertices
    assert_allclose(again.flat_patches[0].coords, mesh.flat_patches[0].coords)
    assert dumps(again) == dumps(mesh)
    assert list_mesh_files(tmp_path) == [path]


def test_list_mesh_files_missing_folder(tmp_path):
    assert list_mesh_files(tmp_path / "absent") == []


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("MESH v1 3 1 0\n", 1),
        ("IMESH v1 3 1 0\nf 0 1 2\ne 0 1 -1.0\n", 3),
        ("IMESH v1 3 1 0\nf 0 1 9\n", 2),
        ("IMESH v1 3 1 0\nf 0 1 2\nx 1 2\n", 3),
        ("IMESH v1 3 2 0\nf 0 1 2\n", 1),
    ],
)
def test_loads_reports_line(text, line):
    with pytest.raises(MeshError) as info:
        loads(text)
    assert info.value.line == line
